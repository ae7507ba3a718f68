"""Synthetic objective catalog: nine scalable families, shifted variants,
and low-intrinsic-dimension embeddings.

All functions are stated in their canonical minimization form over their
canonical raw boxes and negated here, since the engine maximizes. The raw
bounds are written out below so the catalog is self-contained.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import SearchDomain, denormalize
from .errors import InvalidArgument

_MICHALEWICZ_M = 10  # catalog-default steepness


@dataclass(frozen=True)
class Problem:
    """An objective with bounds, optimum metadata and maximization sign.

    `evaluate` maps a unit-cube point to the objective value the engine
    maximizes. `optimum_point` is stored in raw units.
    """

    name: str
    dim: int
    domain: SearchDomain
    evaluate: Callable[[np.ndarray], float]
    optimum_value: float | None = None
    optimum_point: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


# --- minimization-form definitions on raw coordinates ----------------------

def _ackley(x: np.ndarray) -> float:
    d = x.shape[0]
    a, b, c = 20.0, 0.2, 2.0 * np.pi
    return float(
        -a * np.exp(-b * np.sqrt(np.mean(x * x)))
        - np.exp(np.mean(np.cos(c * x)))
        + a
        + np.e
    )


def _dixon_price(x: np.ndarray) -> float:
    i = np.arange(2, x.shape[0] + 1)
    return float((x[0] - 1.0) ** 2 + np.sum(i * (2.0 * x[1:] ** 2 - x[:-1]) ** 2))


def _griewank(x: np.ndarray) -> float:
    i = np.arange(1, x.shape[0] + 1)
    return float(np.sum(x * x) / 4000.0 - np.prod(np.cos(x / np.sqrt(i))) + 1.0)


def _levy(x: np.ndarray) -> float:
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[0]) ** 2
    mid = np.sum((w[:-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:-1] + 1.0) ** 2))
    tail = (w[-1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[-1]) ** 2)
    return float(head + mid + tail)


def _michalewicz(x: np.ndarray) -> float:
    i = np.arange(1, x.shape[0] + 1)
    return float(-np.sum(np.sin(x) * np.sin(i * x * x / np.pi) ** (2 * _MICHALEWICZ_M)))


def _powell(x: np.ndarray) -> float:
    # terms over groups of four; trailing dim % 4 coordinates do not enter
    g = x.shape[0] // 4
    x1, x2, x3, x4 = (x[k:4 * g:4] for k in range(4))
    return float(
        np.sum((x1 + 10.0 * x2) ** 2)
        + 5.0 * np.sum((x3 - x4) ** 2)
        + np.sum((x2 - 2.0 * x3) ** 4)
        + 10.0 * np.sum((x1 - x4) ** 4)
    )


def _rastrigin(x: np.ndarray) -> float:
    return float(10.0 * x.shape[0] + np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x)))


def _rosenbrock(x: np.ndarray) -> float:
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (x[:-1] - 1.0) ** 2))


def _styblinski_tang(x: np.ndarray) -> float:
    return float(0.5 * np.sum(x ** 4 - 16.0 * x * x + 5.0 * x))


def _branin(x: np.ndarray) -> float:
    a = 1.0
    b = 5.1 / (4.0 * np.pi ** 2)
    c = 5.0 / np.pi
    r = 6.0
    s = 10.0
    t = 1.0 / (8.0 * np.pi)
    return float(a * (x[1] - b * x[0] ** 2 + c * x[0] - r) ** 2 + s * (1.0 - t) * np.cos(x[0]) + s)


_ST_ROOT = -2.903534  # catalogued root of the Styblinski-Tang gradient
_ST_PER_DIM = 0.5 * (_ST_ROOT ** 4 - 16.0 * _ST_ROOT ** 2 + 5.0 * _ST_ROOT)

_BRANIN_BOUNDS = (np.array([-5.0, 0.0]), np.array([10.0, 15.0]))
_BRANIN_ARGMIN = np.array([np.pi, 2.275])
_BRANIN_MIN = _branin(_BRANIN_ARGMIN)

# name -> (min-form fn, lower, upper, min dim, argmin builder, known min value)
_CATALOG: dict[str, tuple] = {
    "ackley": (_ackley, -32.768, 32.768, 1, lambda d: np.zeros(d), lambda d: 0.0),
    "dixon_price": (
        _dixon_price, -10.0, 10.0, 1,
        lambda d: 2.0 ** (-(2.0 ** np.arange(1, d + 1) - 2.0) / 2.0 ** np.arange(1, d + 1)),
        lambda d: 0.0,
    ),
    "griewank": (_griewank, -600.0, 600.0, 1, lambda d: np.zeros(d), lambda d: 0.0),
    "levy": (_levy, -10.0, 10.0, 1, lambda d: np.ones(d), lambda d: 0.0),
    "michalewicz": (_michalewicz, 0.0, np.pi, 1, None, None),
    "powell": (_powell, -4.0, 5.0, 4, lambda d: np.zeros(d), lambda d: 0.0),
    "rastrigin": (_rastrigin, -5.12, 5.12, 1, lambda d: np.zeros(d), lambda d: 0.0),
    "rosenbrock": (_rosenbrock, -5.0, 10.0, 2, lambda d: np.ones(d), lambda d: 0.0),
    "styblinski_tang": (
        _styblinski_tang, -5.0, 5.0, 1,
        lambda d: np.full(d, _ST_ROOT),
        lambda d: d * _ST_PER_DIM,
    ),
}

PROBLEM_NAMES = tuple(sorted(_CATALOG))
SHIFTABLE_NAMES = ("ackley", "griewank", "powell", "rastrigin", "rosenbrock")
EMBEDDABLE_INNER = ("branin2", "ackley", "levy")

# catalogued Michalewicz minima (steepness m=10); the D=2 argmin is known
_MICHALEWICZ_MIN = {2: -1.80130341, 5: -4.687658, 10: -9.66015}
_MICHALEWICZ_ARGMIN_2D = np.array([2.20290552, 1.57079633])


def _negated(fn_min, domain: SearchDomain) -> Callable[[np.ndarray], float]:
    def evaluate(x_unit: np.ndarray) -> float:
        return -fn_min(denormalize(x_unit, domain))

    return evaluate


def make(name: str, dim: int) -> Problem:
    """Build a catalog problem at the given dimension."""
    if name not in _CATALOG:
        raise InvalidArgument(f"unknown problem {name!r}; known: {list(PROBLEM_NAMES)}")
    fn, lo, hi, min_dim, argmin, fmin = _CATALOG[name]
    if dim < min_dim:
        raise InvalidArgument(f"{name} needs dim >= {min_dim}, got {dim}")
    domain = SearchDomain(np.full(dim, lo), np.full(dim, hi))
    opt_point = None
    opt_value = None
    if name == "michalewicz":
        if dim in _MICHALEWICZ_MIN:
            opt_value = -_MICHALEWICZ_MIN[dim]
        if dim == 2:
            opt_point = _MICHALEWICZ_ARGMIN_2D.copy()
            opt_value = -_michalewicz(opt_point)
    elif argmin is not None:
        opt_point = argmin(dim)
        opt_value = -fmin(dim)
    return Problem(
        name=name,
        dim=dim,
        domain=domain,
        evaluate=_negated(fn, domain),
        optimum_value=opt_value,
        optimum_point=opt_point,
        meta={"variant": "plain"},
    )


def make_shifted(name: str, dim: int, seed: int, delta=None) -> Problem:
    """Shifted variant f(x + delta) with delta_i ~ U(lower_i, upper_i).

    The shifted argument is clamped back onto the raw box before evaluation
    (the function is undefined outside it). Optimum metadata survives only
    when the displaced minimizer stays in bounds.
    """
    if name not in SHIFTABLE_NAMES:
        raise InvalidArgument(f"shifted variant exists only for {SHIFTABLE_NAMES}")
    base = make(name, dim)
    fn = _CATALOG[name][0]
    lo, hi = base.domain.lower, base.domain.upper
    if delta is None:
        rng = np.random.default_rng(int(seed))
        delta = rng.uniform(lo, hi)
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (dim,):
        raise InvalidArgument(f"delta must have shape ({dim},)")

    def fn_shifted(x_raw: np.ndarray) -> float:
        return fn(np.clip(x_raw + delta, lo, hi))

    opt_point = None
    opt_value = None
    if base.optimum_point is not None:
        moved = base.optimum_point - delta
        if np.all(moved >= lo) and np.all(moved <= hi):
            opt_point = moved
            opt_value = base.optimum_value
    domain = base.domain
    return Problem(
        name=f"{name}_shifted",
        dim=dim,
        domain=domain,
        evaluate=_negated(fn_shifted, domain),
        optimum_value=opt_value,
        optimum_point=opt_point,
        meta={"variant": "shifted", "seed": int(seed), "delta": delta.tolist()},
    )


def _inner_spec(inner: str, d: int):
    if inner == "branin2":
        if d != 2:
            raise InvalidArgument("branin2 has intrinsic dimension 2")
        return _branin, _BRANIN_BOUNDS[0], _BRANIN_BOUNDS[1], _BRANIN_ARGMIN, _BRANIN_MIN
    if inner in ("ackley", "levy"):
        fn, lo, hi, _, argmin, fmin = _CATALOG[inner]
        return fn, np.full(d, lo), np.full(d, hi), argmin(d), fmin(d)
    raise InvalidArgument(f"unknown inner function {inner!r}; known: {EMBEDDABLE_INNER}")


def make_embedded(inner: str, d: int, dim: int, seed: int, rotation: bool = False) -> Problem:
    """Embed a d-dimensional objective into `dim` coordinates.

    Default embedding is axis-aligned: a seed-chosen subset of d coordinates
    feeds the inner function and the remaining dim-d coordinates are ignored,
    which keeps the ground-truth subspace checkable. The rotation option maps
    the cube through a random orthonormal projection instead (optimum
    metadata is dropped there because the image need not contain the inner
    minimizer).
    """
    if d > dim:
        raise InvalidArgument(f"intrinsic dimension {d} exceeds ambient dimension {dim}")
    if d < 1:
        raise InvalidArgument("intrinsic dimension must be >= 1")
    fn, in_lo, in_hi, in_argmin, in_min = _inner_spec(inner, d)
    rng = np.random.default_rng(int(seed))
    label = f"{inner}{'' if inner == 'branin2' else d}_in_{dim}d"

    if rotation:
        gauss = rng.standard_normal((dim, d))
        q, _ = np.linalg.qr(gauss)
        R = q.T  # (d, dim), orthonormal rows
        scale = np.sqrt(dim)
        inner_domain = SearchDomain(in_lo, in_hi)

        def evaluate(x_unit: np.ndarray) -> float:
            z = R @ (np.asarray(x_unit, dtype=float) - 0.5)
            u_inner = 0.5 + z / scale  # stays inside [0, 1]^d
            return -fn(denormalize(u_inner, inner_domain))

        domain = SearchDomain(np.zeros(dim), np.ones(dim))
        return Problem(
            name=label, dim=dim, domain=domain, evaluate=evaluate,
            meta={"variant": "embedded", "inner": inner, "d": d,
                  "seed": int(seed), "rotation": True},
        )

    active = np.sort(rng.choice(dim, size=d, replace=False))
    lo = np.zeros(dim)
    hi = np.ones(dim)
    lo[active] = in_lo
    hi[active] = in_hi
    domain = SearchDomain(lo, hi)

    def evaluate(x_unit: np.ndarray) -> float:
        x_raw = denormalize(x_unit, domain)
        return -fn(x_raw[active])

    opt_point = 0.5 * (lo + hi)
    opt_point[active] = in_argmin
    return Problem(
        name=label,
        dim=dim,
        domain=domain,
        evaluate=evaluate,
        optimum_value=-in_min,
        optimum_point=opt_point,
        meta={"variant": "embedded", "inner": inner, "d": d, "seed": int(seed),
              "rotation": False, "active_dims": active.tolist()},
    )


def problem_metadata(problem: Problem) -> dict:
    """JSON-serializable description (for `list-problems` and frozen configs)."""
    return {
        "name": problem.name,
        "dim": problem.dim,
        "lower": problem.domain.lower.tolist(),
        "upper": problem.domain.upper.tolist(),
        "optimum_value": problem.optimum_value,
        "optimum_point": None if problem.optimum_point is None else problem.optimum_point.tolist(),
        "meta": problem.meta,
    }
