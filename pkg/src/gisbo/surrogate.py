"""Surrogate contract plus the built-in exact Gaussian process.

The GP uses a Matern 5/2 kernel with ARD lengthscales, a constant mean,
and internal y standardization. Hyperparameters are chosen by maximizing
the log marginal likelihood plus weak log-normal priors (a MAP regularizer
whose lengthscale prior is located at log sqrt(D), so the model stays sane
when observations are scarce relative to the dimension). Predictive means,
variances and analytic mean-gradients are all closed-form.

Any surrogate that cannot differentiate its own mean is still served
gradients through :func:`finite_difference_mean_grad`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .core import ObservationSet, PosteriorBatch
from .errors import FitFailed, InsufficientData, InvalidArgument
from .sampling import derive_seed

_SQRT5 = np.sqrt(5.0)

# jitter ladder tried on Cholesky failure before giving up
_JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

# predictive variance reported by the constant-model fallback (the noise floor)
NOISE_FLOOR = 1e-8

# log-space box for the hyperparameter search
_LOG_BOUNDS_SF2 = (np.log(1e-6), np.log(1e3))
_LOG_BOUNDS_SN2 = (np.log(NOISE_FLOOR), np.log(10.0))
_LOG_BOUNDS_ELL = (np.log(1e-3), np.log(1e3))


@dataclass(frozen=True)
class GpTheta:
    """Kernel hyperparameters in standardized-y units."""

    signal_variance: float
    noise_variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ell = np.array(self.lengthscales, dtype=float, copy=True)
        if ell.ndim != 1 or ell.shape[0] < 1:
            raise InvalidArgument("lengthscales must be a 1-D vector")
        if self.signal_variance <= 0 or self.noise_variance <= 0 or np.any(ell <= 0):
            raise InvalidArgument("GP hyperparameters must be strictly positive")
        ell.flags.writeable = False
        object.__setattr__(self, "lengthscales", ell)

    def log_vector(self) -> np.ndarray:
        return np.concatenate((
            [np.log(self.signal_variance), np.log(self.noise_variance)],
            np.log(self.lengthscales),
        ))

    @staticmethod
    def from_log_vector(u: np.ndarray) -> "GpTheta":
        return GpTheta(float(np.exp(u[0])), float(np.exp(u[1])), np.exp(u[2:]))


@dataclass(frozen=True)
class GpState:
    """Immutable posterior state; safe to share across threads."""

    theta: GpTheta
    chol: np.ndarray          # lower Cholesky factor of K + sn2*I (+ jitter)
    alpha: np.ndarray         # (K + sn2*I)^{-1} y_standardized
    mean_const: float         # sample mean of y in original units
    y_scale: float            # sample std of y in original units
    X_train: np.ndarray
    constant: bool = False    # constant-model fallback (zero-variance y)


def _kernel(theta: GpTheta, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    R = cdist(A / theta.lengthscales, B / theta.lengthscales)
    return theta.signal_variance * (1.0 + _SQRT5 * R + (5.0 / 3.0) * R * R) * np.exp(-_SQRT5 * R)


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    ym = float(np.mean(y))
    ys = float(np.std(y))
    if ys < 1e-12:
        return y - ym, ym, 1.0
    return (y - ym) / ys, ym, ys


def _chol_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    for jitter in _JITTERS:
        try:
            L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise FitFailed(f"Cholesky failed after max jitter {_JITTERS[-1]:g}")


def log_marginal_likelihood(theta: GpTheta, obs: ObservationSet) -> float:
    """Log marginal likelihood of the standardized targets.

    Returns -inf when the covariance is not positive definite, which lets
    hyperparameter search treat the point as infeasible.
    """
    ys, _, _ = _standardize(obs.y)
    K = _kernel(theta, obs.X, obs.X) + theta.noise_variance * np.eye(obs.n)
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = cho_solve((L, True), ys)
    return float(
        -0.5 * ys @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * obs.n * np.log(2.0 * np.pi)
    )


# --- MAP objective ----------------------------------------------------------

@dataclass(frozen=True)
class _LogNormal:
    """Log-normal regularizer, applied as a Gaussian on u = log theta.

    The pull point of the gradient is exp(loc); including the theta-space
    Jacobian instead would relocate the pull to the density mode
    exp(loc - scale^2), which for wide scales drags unused lengthscales
    to tiny values and collapses the kernel to a diagonal.
    """

    loc: float
    scale: float

    def logpdf_and_grad(self, u: float) -> tuple[float, float]:
        z = (u - self.loc) / self.scale
        logp = -0.5 * z * z - np.log(self.scale) - 0.5 * np.log(2.0 * np.pi)
        return logp, -z / self.scale


def _priors(dim: int) -> tuple[_LogNormal, _LogNormal, _LogNormal]:
    # signal ~ LN(0,1) on standardized y; noise weak; lengthscale located at
    # log sqrt(D) so high-dimensional fits start long and shrink only where
    # the data insists
    return (
        _LogNormal(0.0, 1.0),
        _LogNormal(-6.0, 3.0),
        _LogNormal(0.5 * np.log(dim), np.sqrt(3.0)),
    )


def _neg_map_and_grad(u: np.ndarray, X: np.ndarray, ys: np.ndarray) -> tuple[float, np.ndarray]:
    n, dim = X.shape
    sf2 = np.exp(u[0])
    sn2 = np.exp(u[1])
    ell = np.exp(u[2:])

    R = cdist(X / ell, X / ell)
    E = np.exp(-_SQRT5 * R)
    Kf = sf2 * (1.0 + _SQRT5 * R + (5.0 / 3.0) * R * R) * E
    K = Kf + sn2 * np.eye(n)
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(u)

    alpha = cho_solve((L, True), ys)
    lml = -0.5 * ys @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2.0 * np.pi)

    Kinv = cho_solve((L, True), np.eye(n))
    M = np.outer(alpha, alpha) - Kinv

    grad = np.empty_like(u)
    grad[0] = 0.5 * np.sum(M * Kf)
    grad[1] = 0.5 * sn2 * np.trace(M)
    # d lml / d log ell_d via B = M o G without materializing (n, n, D)
    G = (5.0 / 3.0) * sf2 * (1.0 + _SQRT5 * R) * E
    B = M * G
    rs = B.sum(axis=1)
    BX = B @ X
    t1 = (X * X * rs[:, None]).sum(axis=0)
    t2 = (X * BX).sum(axis=0)
    grad[2:] = (t1 - t2) / (ell * ell)

    p_sf, p_sn, p_ell = _priors(dim)
    lp0, g0 = p_sf.logpdf_and_grad(u[0])
    lp1, g1 = p_sn.logpdf_and_grad(u[1])
    obj = lml + lp0 + lp1
    grad[0] += g0
    grad[1] += g1
    z = (u[2:] - p_ell.loc) / p_ell.scale
    obj += np.sum(-0.5 * z * z - np.log(p_ell.scale) - 0.5 * np.log(2.0 * np.pi))
    grad[2:] += -z / p_ell.scale

    return -obj, -grad


def build_state(obs: ObservationSet, theta: GpTheta) -> GpState:
    """Assemble a posterior state for explicit hyperparameters."""
    if theta.lengthscales.shape[0] != obs.dim:
        raise InvalidArgument("lengthscale count must equal the input dimension")
    ys, ym, yscale = _standardize(obs.y)
    K = _kernel(theta, obs.X, obs.X) + theta.noise_variance * np.eye(obs.n)
    L, _ = _chol_with_jitter(K)
    alpha = cho_solve((L, True), ys)
    return GpState(theta, L, alpha, ym, yscale, np.array(obs.X, copy=True))


def fit(obs: ObservationSet, n_restarts: int = 3, max_evals: int = 200,
        seed: int = 0, warm_start: GpTheta | None = None) -> GpState:
    """MAP hyperparameters from multi-start L-BFGS, then the posterior state.

    Restart starting points are drawn from (narrowed) priors seeded by
    `seed`, so refits with identical arguments return identical states. Ties
    between restarts break toward higher likelihood, then lower noise. A
    zero-variance target falls back to the constant model: mean equals that
    constant and variance sits at the noise floor everywhere.
    """
    if obs.n < 2:
        raise InsufficientData(f"GP fit needs n >= 2 observations, got {obs.n}")
    if n_restarts < 1 and warm_start is None:
        raise InvalidArgument("fit needs at least one start")
    ystd, ym, yscale = _standardize(obs.y)
    if float(np.std(obs.y)) < 1e-12:
        theta = GpTheta(1.0, NOISE_FLOOR, np.ones(obs.dim))
        return GpState(theta, np.empty((0, 0)), np.empty(0), ym, 1.0,
                       np.array(obs.X, copy=True), constant=True)

    dim = obs.dim
    p_sf, p_sn, p_ell = _priors(dim)
    bounds = [_LOG_BOUNDS_SF2, _LOG_BOUNDS_SN2] + [_LOG_BOUNDS_ELL] * dim

    starts = []
    if warm_start is not None:
        starts.append(np.clip(warm_start.log_vector(),
                              [b[0] for b in bounds], [b[1] for b in bounds]))
    for k in range(n_restarts):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, k]))
        u0 = np.concatenate((
            [p_sf.loc + 0.5 * p_sf.scale * rng.standard_normal()],
            [p_sn.loc + 0.5 * p_sn.scale * rng.standard_normal()],
            p_ell.loc + 0.5 * p_ell.scale * rng.standard_normal(dim),
        ))
        starts.append(np.clip(u0, [b[0] for b in bounds], [b[1] for b in bounds]))

    candidates = []
    for u0 in starts:
        res = optimize.minimize(
            _neg_map_and_grad, u0, args=(obs.X, ystd), jac=True,
            method="L-BFGS-B", bounds=bounds,
            options={"maxfun": max_evals, "maxiter": max_evals},
        )
        theta = GpTheta.from_log_vector(res.x)
        candidates.append((-res.fun, log_marginal_likelihood(theta, obs),
                           -theta.noise_variance, theta))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]), reverse=True)
    best_theta = candidates[0][3]
    try:
        return build_state(obs, best_theta)
    except FitFailed:
        # extremely rare: the optimum is PD-infeasible; fall back to the
        # next-best restart before reporting failure
        for _, _, _, theta in candidates[1:]:
            try:
                return build_state(obs, theta)
            except FitFailed:
                continue
        raise


def predict(state: GpState, X_cand) -> PosteriorBatch:
    """Predictive mean and variance (original y units) at candidate rows."""
    Xc = np.asarray(X_cand, dtype=float)
    if Xc.ndim != 2:
        raise InvalidArgument(f"X_cand must be 2-D, got shape {Xc.shape}")
    if Xc.shape[0] == 0:
        return PosteriorBatch(np.empty(0), np.empty(0))
    if Xc.shape[1] != state.X_train.shape[1]:
        raise InvalidArgument(
            f"candidate dim {Xc.shape[1]} != training dim {state.X_train.shape[1]}"
        )
    if state.constant:
        m = Xc.shape[0]
        return PosteriorBatch(np.full(m, state.mean_const), np.full(m, NOISE_FLOOR))
    theta = state.theta
    Ks = _kernel(theta, state.X_train, Xc)          # (n, m)
    mean_std = Ks.T @ state.alpha
    V = solve_triangular(state.chol, Ks, lower=True)
    latent = theta.signal_variance - np.einsum("ij,ij->j", V, V)
    var_std = np.clip(latent, 0.0, None) + theta.noise_variance
    mean = state.mean_const + state.y_scale * mean_std
    var = state.y_scale ** 2 * var_std
    return PosteriorBatch(mean, var)


def mean_grad(state: GpState, X) -> np.ndarray:
    """Rows of grad mu(x) (original y units per unit-cube coordinate).

    The Matern 5/2 kernel gradient contracts against alpha without ever
    forming the (m, n, D) difference tensor:

        d mu / dx_d = -(5/3) sf2 / ell_d^2 * (x_d * (C @ alpha) - C @ (alpha * Xtr_d))

    with C = (1 + sqrt5 R) exp(-sqrt5 R); the apparent 1/R singularity
    cancels, so the gradient is exactly zero at zero lag.
    """
    Xc = np.asarray(X, dtype=float)
    if Xc.ndim != 2:
        raise InvalidArgument(f"X must be 2-D, got shape {Xc.shape}")
    if Xc.shape[0] == 0:
        return np.empty((0, state.X_train.shape[1]))
    if Xc.shape[1] != state.X_train.shape[1]:
        raise InvalidArgument(
            f"candidate dim {Xc.shape[1]} != training dim {state.X_train.shape[1]}"
        )
    if state.constant:
        return np.zeros_like(Xc)
    theta = state.theta
    ell2 = theta.lengthscales ** 2
    R = cdist(Xc / theta.lengthscales, state.X_train / theta.lengthscales)
    C = (5.0 / 3.0) * theta.signal_variance * (1.0 + _SQRT5 * R) * np.exp(-_SQRT5 * R)
    s = C @ state.alpha                                  # (m,)
    T = C @ (state.alpha[:, None] * state.X_train)       # (m, D)
    grad_std = -(Xc * s[:, None] - T) / ell2[None, :]
    return state.y_scale * grad_std


def finite_difference_mean_grad(posterior_fn, X, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a surrogate's predictive mean.

    `posterior_fn(X) -> PosteriorBatch`; h is in unit-cube coordinates. This
    is the engine-side fallback for surrogates without analytic gradients.
    """
    Xc = np.asarray(X, dtype=float)
    m, dim = Xc.shape
    grad = np.empty((m, dim))
    for d in range(dim):
        step = np.zeros(dim)
        step[d] = h
        up = posterior_fn(Xc + step).mean
        dn = posterior_fn(Xc - step).mean
        grad[:, d] = (up - dn) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class SurrogateContract:
    """What the engine may assume about a surrogate."""

    identity: str
    analytic_grad: bool
    max_context_size: int | None = None


@dataclass
class GpSurrogate:
    """Engine-facing adapter around the exact GP.

    The first `condition` call runs the full multi-start fit; later refits
    warm-start from the previous optimum, adding `refit_restarts` fresh
    random starts every `refit_period` calls. Sequential loops refit every
    iteration, so this keeps the per-iteration cost flat without giving up
    the restart diversity that lets the ARD structure escape early optima.
    """

    n_restarts: int = 3
    max_evals: int = 200
    seed: int = 0
    warm_start: bool = True
    refit_restarts: int = 1
    refit_period: int = 5
    contract: SurrogateContract = field(
        default_factory=lambda: SurrogateContract("gp", analytic_grad=True))
    state: GpState | None = None
    _calls: int = 0

    def condition(self, obs: ObservationSet, fresh: bool = False) -> None:
        prev = None if (fresh or not self.warm_start or self.state is None
                        or self.state.constant) else self.state.theta
        if prev is None:
            restarts = self.n_restarts
        elif self.refit_period > 0 and self._calls % self.refit_period == 0:
            restarts = min(self.refit_restarts, self.n_restarts)
        else:
            restarts = 0
        seed = derive_seed(self.seed, 0xF1, self._calls, 1 if fresh else 0)
        self._calls += 1
        self.state = fit(obs, n_restarts=restarts, max_evals=self.max_evals,
                         seed=seed, warm_start=prev)

    def posterior(self, X, need_grad: bool = False) -> PosteriorBatch:
        if self.state is None:
            raise InvalidArgument("surrogate must be conditioned before posterior queries")
        post = predict(self.state, X)
        if need_grad:
            post = replace(post, grad=mean_grad(self.state, X))
        return post
