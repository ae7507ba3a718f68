"""In-context regression backends.

A backend answers one inference call: condition on (x_obs, y_obs), predict
mean and variance at x_cand in a single forward pass, and (optionally)
return the gradient of the predictive mean with respect to each candidate
row via automatic differentiation. Backends hold no per-request state and
never mutate their weights.

`reference` is the built-in backend: an exact in-context Bayesian
regression layer (a fixed-hyperparameter Gaussian posterior computed in
torch, dimension-scaled lengthscale, standardized targets). It needs no
model download, is fully differentiable, and is deterministic. The
`tabpfn` backend adapts the pretrained TabPFN v2 regressor when that
package and its checkpoint are installed; its public predict path does not
expose input gradients, so it serves mean/variance only and lets the
engine fall back to finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


class ModelLoadError(Exception):
    """The requested backend cannot be constructed on this machine."""


@dataclass
class InferenceResult:
    mean: np.ndarray
    var: np.ndarray
    grad: np.ndarray | None


# lengthscale multipliers used when an ensemble (n_estimators > 1) is
# requested; member 0 is the single-estimator default
_ENSEMBLE_SCALES = (1.0, 0.5, 2.0, 0.75, 1.5, 0.25, 3.0, 1.25)


class ReferenceIclRegressor:
    """Frozen in-context Bayesian regression with a differentiable forward.

    The conditioning math is an exact Gaussian posterior under a squared-
    exponential kernel with fixed, dimension-scaled hyperparameters
    (lengthscale 0.5*sqrt(D) per ensemble scale, unit signal variance,
    1e-3 noise on standardized targets). There is nothing to train or
    tune: all adaptation happens through the context supplied per request,
    and the same request always produces the same answer.
    """

    name = "reference"

    def __init__(self, n_estimators: int = 1, device: str = "cpu"):
        if n_estimators < 1 or n_estimators > len(_ENSEMBLE_SCALES):
            raise ModelLoadError(
                f"n_estimators must be in [1, {len(_ENSEMBLE_SCALES)}]")
        self.n_estimators = n_estimators
        self.noise_var = 1e-3
        try:
            self.device = torch.device(device)
            torch.zeros(1, device=self.device)
        except (RuntimeError, AssertionError) as exc:
            raise ModelLoadError(f"device {device!r} unavailable: {exc}") from exc

    def _posterior(self, Xo, yo, Xc, lengthscale):
        k_oo = torch.exp(-0.5 * torch.cdist(Xo, Xo).pow(2) / lengthscale ** 2)
        k_oc = torch.exp(-0.5 * torch.cdist(Xo, Xc).pow(2) / lengthscale ** 2)
        K = k_oo + (self.noise_var + 1e-8) * torch.eye(Xo.shape[0], dtype=Xo.dtype,
                                                       device=self.device)
        L = torch.linalg.cholesky(K)
        alpha = torch.cholesky_solve(yo.unsqueeze(1), L).squeeze(1)
        mean = k_oc.T @ alpha
        v = torch.linalg.solve_triangular(L, k_oc, upper=False)
        var = (1.0 - v.pow(2).sum(dim=0)).clamp(min=0.0) + self.noise_var
        return mean, var

    def infer(self, x_obs: np.ndarray, y_obs: np.ndarray, x_cand: np.ndarray,
              need_grad: bool) -> InferenceResult:
        n, dim = x_obs.shape
        y_mean = float(np.mean(y_obs))
        y_std = float(np.std(y_obs))
        scale = y_std if y_std > 1e-12 else 1.0

        Xo = torch.as_tensor(x_obs, dtype=torch.float64, device=self.device)
        yo = torch.as_tensor((y_obs - y_mean) / scale, dtype=torch.float64,
                             device=self.device)
        Xc = torch.as_tensor(x_cand, dtype=torch.float64, device=self.device)
        Xc.requires_grad_(need_grad)

        base = 0.5 * np.sqrt(dim)
        means, raws = [], []
        for member in range(self.n_estimators):
            mean_k, var_k = self._posterior(Xo, yo, Xc, base * _ENSEMBLE_SCALES[member])
            means.append(mean_k)
            raws.append(var_k + mean_k.pow(2))
        mean = torch.stack(means).mean(dim=0)
        var = (torch.stack(raws).mean(dim=0) - mean.pow(2)).clamp(min=0.0)

        grad = None
        if need_grad:
            grad_t, = torch.autograd.grad(mean.sum(), Xc)
            grad = (scale * grad_t).detach().cpu().numpy()
        return InferenceResult(
            mean=(y_mean + scale * mean).detach().cpu().numpy(),
            var=(scale ** 2 * var).detach().cpu().numpy(),
            grad=grad,
        )


class TabPfnRegressorBackend:
    """Adapter over the pretrained TabPFN v2 regressor.

    Serves in-context mean/variance through the public estimator API. The
    released predict path runs non-differentiable preprocessing, so no
    analytic input gradients are returned here; pairing this backend with
    an engine-side finite-difference fallback keeps the full contract.
    Construction fails cleanly when the package or its checkpoint is
    missing.
    """

    name = "tabpfn"

    def __init__(self, n_estimators: int = 1, device: str = "cpu"):
        try:
            from tabpfn import TabPFNRegressor
        except ImportError as exc:
            raise ModelLoadError(
                "the tabpfn package is not installed; install the 'tabpfn' extra "
                "or use the reference backend") from exc
        try:
            self._regressor = TabPFNRegressor(n_estimators=n_estimators, device=device)
        except Exception as exc:  # model assets missing, bad device, ...
            raise ModelLoadError(f"TabPFN could not be constructed: {exc}") from exc
        self.n_estimators = n_estimators

    def infer(self, x_obs, y_obs, x_cand, need_grad: bool) -> InferenceResult:
        y_mean = float(np.mean(y_obs))
        y_std = float(np.std(y_obs))
        scale = y_std if y_std > 1e-12 else 1.0
        self._regressor.fit(x_obs, (y_obs - y_mean) / scale)
        out = self._regressor.predict(x_cand, output_type="mean_variance")
        if isinstance(out, dict):
            mean, var = np.asarray(out["mean"]), np.asarray(out["variance"])
        else:
            mean, var = (np.asarray(v) for v in out)
        return InferenceResult(
            mean=y_mean + scale * mean,
            var=scale ** 2 * np.clip(var, 0.0, None),
            grad=None,
        )


BACKENDS = {
    ReferenceIclRegressor.name: ReferenceIclRegressor,
    TabPfnRegressorBackend.name: TabPfnRegressorBackend,
}


def load_backend(name: str, n_estimators: int, device: str):
    if name not in BACKENDS:
        raise ModelLoadError(f"unknown backend {name!r}; known: {sorted(BACKENDS)}")
    return BACKENDS[name](n_estimators=n_estimators, device=device)
