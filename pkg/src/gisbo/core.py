"""Shared domain types and the unit-cube coordinate convention.

Everything downstream (surrogates, subspace identification, acquisition)
operates in the normalized cube [0, 1]^D under a maximization sign
convention; raw problem bounds are touched only when an objective is
evaluated. All types here are immutable values and safe to share across
parallel trial workers.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument


def _as_1d(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidArgument(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SearchDomain:
    """Box bounds of a problem in raw units."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(_as_1d(self.lower, "lower"))
        hi = _frozen(_as_1d(self.upper, "upper"))
        if lo.shape != hi.shape:
            raise InvalidArgument(
                f"lower/upper length mismatch: {lo.shape[0]} vs {hi.shape[0]}"
            )
        if lo.shape[0] < 1:
            raise InvalidArgument("domain dimension must be >= 1")
        if not np.all(lo < hi):
            raise InvalidArgument("every lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def normalize(x_raw, domain: SearchDomain) -> np.ndarray:
    """Map a raw-unit point onto [0, 1]^D.

    Points outside the box are clamped onto it, with a warning, so callers
    never receive coordinates outside the unit cube.
    """
    x = _as_1d(x_raw, "x_raw")
    if x.shape[0] != domain.dim:
        raise InvalidArgument(f"point has dim {x.shape[0]}, domain has dim {domain.dim}")
    if np.any(x < domain.lower) or np.any(x > domain.upper):
        warnings.warn("point outside domain bounds; clamping", stacklevel=2)
        x = np.clip(x, domain.lower, domain.upper)
    return (x - domain.lower) / domain.width


def denormalize(x_unit, domain: SearchDomain) -> np.ndarray:
    """Exact inverse of :func:`normalize` up to floating round-off."""
    u = _as_1d(x_unit, "x_unit")
    if u.shape[0] != domain.dim:
        raise InvalidArgument(f"point has dim {u.shape[0]}, domain has dim {domain.dim}")
    return domain.lower + u * domain.width


@dataclass(frozen=True)
class ObservationSet:
    """The growing in-context dataset of (x, y) pairs, x in [0, 1]^D."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise InvalidArgument(f"X must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InvalidArgument(
                f"y length {y.shape} does not match X row count {X.shape[0]}"
            )
        if X.shape[0] < 1:
            raise InvalidArgument("observation set must hold at least one point")
        if X.size and (X.min() < -1e-12 or X.max() > 1 + 1e-12):
            raise InvalidArgument("X entries must lie in [0, 1]")
        X = np.clip(X, 0.0, 1.0)
        X = _frozen(X)
        yf = _frozen(y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", yf)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def append(self, x_new, y_new: float) -> "ObservationSet":
        """Return a new set with one more observation appended."""
        x = _as_1d(x_new, "x_new")
        return ObservationSet(
            np.vstack([self.X, x[None, :]]),
            np.append(self.y, float(y_new)),
        )

    def incumbent(self) -> tuple[np.ndarray, float]:
        """Best (x, y) pair under maximization."""
        j = int(np.argmax(self.y))
        return self.X[j].copy(), float(self.y[j])


@dataclass(frozen=True)
class PosteriorBatch:
    """Per-candidate predictive mean/variance, optionally mean-gradient rows."""

    mean: np.ndarray
    var: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        mean = _frozen(_as_1d(self.mean, "mean"))
        var = _frozen(_as_1d(self.var, "var"))
        if mean.shape != var.shape:
            raise InvalidArgument("mean and var must have equal length")
        if var.size and var.min() < 0:
            raise InvalidArgument("variances must be nonnegative")
        grad = self.grad
        if grad is not None:
            grad = np.asarray(grad, dtype=float)
            if grad.ndim != 2 or grad.shape[0] != mean.shape[0]:
                raise InvalidArgument(
                    f"grad shape {grad.shape} must be (m, D) with one row per candidate"
                )
            grad = _frozen(grad)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)
        object.__setattr__(self, "grad", grad)

    def __len__(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class IterationRecord:
    """One objective evaluation in a run trace.

    ``r_selected`` is 0 for evaluations made without a subspace (the initial
    design, random search, and plain full-space BO). ``elapsed_alg_s``
    excludes objective-evaluation time; ``elapsed_total_s`` includes it.
    """

    index: int
    x_next: np.ndarray
    y_next: float
    best_y: float
    r_selected: int
    elapsed_alg_s: float
    elapsed_total_s: float

    def __post_init__(self):
        object.__setattr__(self, "x_next", _frozen(_as_1d(self.x_next, "x_next")))


@dataclass
class RunTrace:
    """Per-evaluation record of one optimization trial (one seed)."""

    run_id: str
    algorithm: str
    problem: str
    dim: int
    seed: int
    records: list[IterationRecord] = field(default_factory=list)
    n_init: int = 0
    error: str | None = None
    f_star: float | None = None

    def append(self, record: IterationRecord) -> None:
        if record.index != len(self.records) + 1:
            raise InvalidArgument(
                f"iteration indices must be consecutive from 1; got {record.index} "
                f"after {len(self.records)} records"
            )
        if self.records and record.best_y < self.records[-1].best_y:
            raise InvalidArgument("best_y must be monotone nondecreasing")
        self.records.append(record)

    @property
    def n_evaluations(self) -> int:
        return len(self.records)

    def best_y_series(self) -> np.ndarray:
        return np.array([r.best_y for r in self.records])

    def y_series(self) -> np.ndarray:
        return np.array([r.y_next for r in self.records])

    def r_selected_series(self) -> np.ndarray:
        return np.array([r.r_selected for r in self.records], dtype=int)

    def final_best(self) -> float:
        if not self.records:
            raise InvalidArgument("empty trace has no best value")
        return self.records[-1].best_y

    def validate(self) -> None:
        """Check the trace invariants (consecutive indices, running max)."""
        best = -np.inf
        for i, rec in enumerate(self.records, start=1):
            if rec.index != i:
                raise InvalidArgument(f"record {i} carries index {rec.index}")
            best = max(best, rec.y_next)
            if rec.best_y != best:
                raise InvalidArgument(
                    f"best_y at iteration {i} is {rec.best_y}, running max is {best}"
                )
