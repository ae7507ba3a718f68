"""Gradient-informed active-subspace identification.

The directional sensitivity of the surrogate is summarized by the empirical
Fisher matrix H = (1/m) sum_j g_j g_j^T of predictive-mean gradients; its
top-r eigenvectors span the search slab, anchored at a reference point, and
low-dimensional coefficients are projected back through V_r.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ObservationSet
from .errors import InvalidArgument, InvalidGradient, NumericError


@dataclass(frozen=True)
class FisherMatrix:
    """Symmetrized average outer product of gradient rows."""

    H: np.ndarray
    sample_count: int

    def __post_init__(self):
        H = np.array(self.H, dtype=float, copy=True)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise InvalidArgument(f"H must be square, got shape {H.shape}")
        H.flags.writeable = False
        object.__setattr__(self, "H", H)

    @property
    def dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class GiSubspace:
    """Top-r eigenbasis of the Fisher matrix plus the anchor point.

    `degenerate` flags iterations where the whole spectrum was numerically
    zero and the basis fell back to the first canonical axis.
    """

    V_r: np.ndarray
    eigvals: np.ndarray
    r: int
    x_ref: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True)
class RSelectionPolicy:
    """How the subspace dimension r is chosen each iteration."""

    kind: str = "fixed"  # "fixed" | "variance_explained"
    fixed_r: int = 10
    threshold: float = 0.95

    def __post_init__(self):
        if self.kind not in ("fixed", "variance_explained"):
            raise InvalidArgument(f"unknown r-selection kind {self.kind!r}")
        if self.fixed_r < 1:
            raise InvalidArgument("fixed_r must be >= 1")
        if not (0.0 < self.threshold < 1.0):
            raise InvalidArgument("variance threshold must lie in (0, 1)")


def fisher_matrix(grads) -> FisherMatrix:
    """H = (1/m) sum_j g_j g_j^T, explicitly symmetrized."""
    G = np.asarray(grads, dtype=float)
    if G.ndim != 2 or G.shape[0] < 1:
        raise InvalidArgument(f"grads must be a nonempty (m, D) matrix, got {G.shape}")
    bad = ~np.isfinite(G).all(axis=1)
    if bad.any():
        rows = np.flatnonzero(bad)
        raise InvalidGradient(f"non-finite gradient in row(s) {rows.tolist()}")
    H = (G.T @ G) / G.shape[0]
    H = 0.5 * (H + H.T)
    return FisherMatrix(H, G.shape[0])


def top_eigvecs(fisher: FisherMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Full symmetric eigendecomposition, eigenvalues descending.

    Eigenvalues are clipped at zero (H is PSD up to round-off) and each
    eigenvector's sign is fixed so its largest-magnitude component is
    positive, making downstream traces replayable bit-for-bit.
    """
    try:
        vals, vecs = np.linalg.eigh(fisher.H)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh on symmetric input
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    lam_max = max(float(vals[0]), 0.0)
    if vals.min() < -1e-10 * max(lam_max, 1.0):
        raise NumericError("Fisher matrix is not PSD within tolerance")
    vals = np.clip(vals, 0.0, None)
    picks = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[picks, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    return vals, vecs


def select_r(eigvals, policy: RSelectionPolicy) -> int:
    """Pick the subspace dimension from a descending nonnegative spectrum."""
    lam = np.asarray(eigvals, dtype=float)
    D = lam.shape[0]
    if policy.kind == "fixed":
        return min(policy.fixed_r, D)
    total = lam.sum()
    if total <= 1e-14:
        return 1
    frac = np.cumsum(lam) / total
    return int(np.searchsorted(frac, policy.threshold - 1e-12) + 1)


def centroid(obs: ObservationSet, mode: str = "centroid") -> np.ndarray:
    """Reference point for the subspace slab.

    `centroid` is the columnwise mean of observed inputs; `incumbent`
    returns the input of the best observation instead.
    """
    if mode == "centroid":
        return obs.X.mean(axis=0)
    if mode == "incumbent":
        x, _ = obs.incumbent()
        return x
    raise InvalidArgument(f"unknown x_ref mode {mode!r}")


def project_candidates(x_ref, V_r, Z, domain_clip: bool = True) -> np.ndarray:
    """Map coefficients z in [-1, 1]^r back to the full cube: x_ref + V_r z."""
    x0 = np.asarray(x_ref, dtype=float)
    V = np.asarray(V_r, dtype=float)
    Zm = np.asarray(Z, dtype=float)
    if V.ndim != 2 or x0.ndim != 1 or V.shape[0] != x0.shape[0]:
        raise InvalidArgument(
            f"V_r shape {V.shape} incompatible with x_ref length {x0.shape}"
        )
    if Zm.ndim != 2 or Zm.shape[1] != V.shape[1]:
        raise InvalidArgument(f"Z shape {Zm.shape} incompatible with V_r {V.shape}")
    X = x0[None, :] + Zm @ V.T
    if domain_clip:
        X = np.clip(X, 0.0, 1.0)
    return X


def identify_subspace(grads, policy: RSelectionPolicy, x_ref) -> GiSubspace:
    """Fisher matrix -> eigenbasis -> r selection, with degenerate fallback.

    An all-zero spectrum (constant surrogate) falls back to r=1 with the
    first canonical axis so the loop can continue; the iteration is flagged.
    """
    fisher = fisher_matrix(grads)
    eigvals, eigvecs = top_eigvecs(fisher)
    x0 = np.asarray(x_ref, dtype=float)
    if eigvals[0] <= 1e-14:
        V = np.zeros((fisher.dim, 1))
        V[0, 0] = 1.0
        return GiSubspace(V, eigvals, 1, x0, degenerate=True)
    r = select_r(eigvals, policy)
    return GiSubspace(eigvecs[:, :r].copy(), eigvals, r, x0)
