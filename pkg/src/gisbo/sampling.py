"""Quasi-random and stratified point generators.

Three jobs: Latin-hypercube initialization, scrambled-Sobol full-space
candidate sets, and coefficient draws on [-1, 1]^r for subspace candidates.
Every generator is a pure function of (count, dimension, seed, scheme) and
replays bit-identically.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import InvalidArgument, UnsupportedDimension

# scipy's Joe-Kuo direction-number table.
_SOBOL_MAX_DIM = 21201

# Entropy tags separating the i.i.d.-uniform coefficient schemes: `uniform`
# stays on the trial-seed lineage, `random` derives an independent stream.
_TAG_UNIFORM = 0x75
_TAG_RANDOM = 0x72


@dataclass(frozen=True)
class SampleBatch:
    points: np.ndarray
    scheme: str
    seed: int

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def lhs(n: int, dim: int, seed: int) -> SampleBatch:
    """Latin hypercube sample: one point per axis stratum, in [0, 1]^dim."""
    if n < 1:
        raise InvalidArgument("lhs needs n >= 1")
    if dim < 1:
        raise InvalidArgument("lhs needs dim >= 1")
    sampler = qmc.LatinHypercube(d=dim, seed=int(seed))
    return SampleBatch(sampler.random(n), "lhs", int(seed))


def sobol(n: int, dim: int, seed: int) -> SampleBatch:
    """Owen-scrambled Sobol points in [0, 1)^dim; distinct seeds give
    distinct scramblings, so repeated trials do not share candidate sets."""
    if n < 0:
        raise InvalidArgument("sobol needs n >= 0")
    if dim < 1:
        raise InvalidArgument("sobol needs dim >= 1")
    if dim > _SOBOL_MAX_DIM:
        raise UnsupportedDimension(
            f"sobol supports at most {_SOBOL_MAX_DIM} dimensions, got {dim}"
        )
    if n == 0:
        return SampleBatch(np.empty((0, dim)), "sobol", int(seed))
    sampler = qmc.Sobol(d=dim, scramble=True, seed=int(seed))
    with warnings.catch_warnings():
        # balance warning for non-power-of-two n; candidate counts need not
        # be powers of two here
        warnings.simplefilter("ignore", UserWarning)
        pts = sampler.random(n)
    return SampleBatch(pts, "sobol", int(seed))


def uniform_cube(n: int, r: int, seed: int, scheme: str = "uniform") -> SampleBatch:
    """Subspace coefficients on [-1, 1]^r.

    `uniform` and `random` are both i.i.d. uniform draws and differ only in
    seed-stream lineage (the distinction is under-specified upstream; callers
    pass trial-derived seeds for `uniform` and per-iteration fresh seeds for
    `random`). `sobol` rescales scrambled Sobol points via 2*u - 1.
    """
    if n < 0:
        raise InvalidArgument("uniform_cube needs n >= 0")
    if r < 1:
        raise InvalidArgument("uniform_cube needs r >= 1")
    if scheme == "sobol":
        pts = 2.0 * sobol(n, r, seed).points - 1.0
    elif scheme in ("uniform", "random"):
        tag = _TAG_UNIFORM if scheme == "uniform" else _TAG_RANDOM
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), tag]))
        pts = rng.uniform(-1.0, 1.0, size=(n, r))
    else:
        raise InvalidArgument(f"unknown coefficient scheme {scheme!r}")
    return SampleBatch(pts, scheme, int(seed))


def derive_seed(master: int, *tags: int) -> int:
    """Deterministic 64-bit child seed from a master seed and integer tags."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *[int(t) for t in tags]])
    return int(ss.generate_state(1, np.uint64)[0])
