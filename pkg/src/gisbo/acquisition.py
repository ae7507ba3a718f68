"""Acquisition scoring over candidate posteriors and argmax selection.

Two parameterizations of the upper confidence bound are provided: the
analytic Gaussian-quantile form mu + beta*sigma (deterministic given the
posterior) and the sampling form max of S posterior draws (matching the
quantile rule with q = 1 - 1/S asymptotically). Expected improvement is
kept for ablations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import PosteriorBatch
from .errors import InvalidArgument, InvalidScore

# sigma floor for the EI ratio; EI is numerically fragile when the
# posterior collapses
_EI_SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class AcquisitionSpec:
    """Which rule scores candidates, and its knobs."""

    kind: str = "ucb_quantile"  # "ucb_quantile" | "ucb_sampling" | "ei"
    beta: float = 2.33
    S: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("ucb_quantile", "ucb_sampling", "ei"):
            raise InvalidArgument(f"unknown acquisition kind {self.kind!r}")
        if self.kind == "ucb_quantile" and self.beta <= 0:
            raise InvalidArgument("ucb_quantile needs beta > 0")
        if self.kind == "ucb_sampling" and self.S < 1:
            raise InvalidArgument("ucb_sampling needs S >= 1")


def ucb_quantile(post: PosteriorBatch, beta: float) -> np.ndarray:
    """scores = mean + beta * sqrt(var)."""
    return post.mean + beta * np.sqrt(post.var)


def ucb_sampling(post: PosteriorBatch, S: int, seed: int) -> np.ndarray:
    """scores = max of S independent draws from N(mean_j, var_j) per candidate."""
    if S < 1:
        raise InvalidArgument("ucb_sampling needs S >= 1")
    m = len(post)
    if m == 0:
        return np.empty(0)
    rng = np.random.default_rng(int(seed))
    draws = post.mean[None, :] + np.sqrt(post.var)[None, :] * rng.standard_normal((S, m))
    return draws.max(axis=0)


def expected_improvement(post: PosteriorBatch, best_y: float) -> np.ndarray:
    """EI over best_y; degenerate sigma=0 candidates get max(mean-best, 0)."""
    sigma = np.sqrt(post.var)
    imp = post.mean - best_y
    out = np.maximum(imp, 0.0)
    pos = sigma > 0
    if pos.any():
        s = np.maximum(sigma[pos], _EI_SIGMA_FLOOR)
        u = imp[pos] / s
        out[pos] = imp[pos] * norm.cdf(u) + s * norm.pdf(u)
    return out


def select_next(scores, X_cand) -> tuple[np.ndarray, int]:
    """Candidate row at the first maximal score (ties break to lowest index).

    NaN scores are hard errors: silently skipping them would bias selection.
    """
    s = np.asarray(scores, dtype=float)
    X = np.asarray(X_cand, dtype=float)
    if s.ndim != 1 or s.shape[0] == 0:
        raise InvalidArgument("scores must be a nonempty vector")
    if X.ndim != 2 or X.shape[0] != s.shape[0]:
        raise InvalidArgument("X_cand row count must match scores length")
    if np.isnan(s).any():
        raise InvalidScore(f"NaN acquisition score at index {int(np.flatnonzero(np.isnan(s))[0])}")
    idx = int(np.argmax(s))
    return X[idx].copy(), idx


def score(post: PosteriorBatch, spec: AcquisitionSpec, best_y: float | None = None,
          seed: int | None = None) -> np.ndarray:
    """Dispatch on the spec; `seed` overrides spec.seed for per-iteration draws."""
    if spec.kind == "ucb_quantile":
        return ucb_quantile(post, spec.beta)
    if spec.kind == "ucb_sampling":
        return ucb_sampling(post, spec.S, spec.seed if seed is None else seed)
    if best_y is None:
        raise InvalidArgument("expected_improvement needs best_y")
    return expected_improvement(post, best_y)
