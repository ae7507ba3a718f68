"""The optimization loops: gradient-informed subspace BO plus baselines.

One iteration of the subspace loop: condition the surrogate on the history,
draw a fresh scrambled-Sobol candidate set over the full cube, take
predictive-mean gradients there, build the Fisher eigenbasis, pick r, anchor
the slab at the reference point, draw coefficients in [-1, 1]^r, project
back (clipped to the cube), score the projected candidates with the
acquisition rule on a second posterior pass, and evaluate the argmax.

Baselines share the trace format: plain BO skips the subspace stage and
scores the full-space candidates; random search queries uniform points.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .acquisition import AcquisitionSpec, expected_improvement, score, select_next
from .bridge import BridgeSurrogate, spawn
from .core import IterationRecord, ObservationSet, PosteriorBatch, RunTrace
from .errors import BridgeError, FitFailed, InsufficientData, InvalidConfig, NumericError
from .sampling import derive_seed, lhs, sobol, uniform_cube
from .subspace import RSelectionPolicy, centroid, identify_subspace, project_candidates
from .surrogate import GpSurrogate

# entropy tags for the per-trial seed streams
_TAG_INIT = 1
_TAG_CAND = 2
_TAG_Z = 3
_TAG_Z_FRESH = 4
_TAG_ACQ = 5
_TAG_FIT = 6
_TAG_RAND = 7


@dataclass(frozen=True)
class RunConfig:
    """Knobs of one optimization trial."""

    n_init: int = 200
    iters: int = 500
    m_cand: int = 4096
    r_policy: RSelectionPolicy = field(default_factory=RSelectionPolicy)
    acq: AcquisitionSpec = field(default_factory=AcquisitionSpec)
    subspace_scheme: str = "uniform"
    x_ref_mode: str = "centroid"
    surrogate: str = "gp"
    bridge_command: tuple[str, ...] | None = None
    seed: int = 0
    gp_restarts: int = 3
    gp_max_evals: int = 200
    gp_warm_start: bool = True

    def __post_init__(self):
        if self.n_init < 2:
            raise InvalidConfig("n_init must be >= 2")
        if self.iters < 1:
            raise InvalidConfig("iters must be >= 1")
        if self.m_cand < 1:
            raise InvalidConfig("m_cand must be >= 1")
        if self.subspace_scheme not in ("uniform", "random", "sobol"):
            raise InvalidConfig(f"unknown subspace scheme {self.subspace_scheme!r}")
        if self.x_ref_mode not in ("centroid", "incumbent"):
            raise InvalidConfig(f"unknown x_ref mode {self.x_ref_mode!r}")
        if self.surrogate not in ("gp", "bridge"):
            raise InvalidConfig(f"unknown surrogate {self.surrogate!r}")
        if self.surrogate == "bridge" and not self.bridge_command:
            raise InvalidConfig("bridge surrogate needs a bridge_command")


def build_surrogate(config: RunConfig):
    """Construct the engine-side surrogate adapter named by the config."""
    if config.surrogate == "gp":
        return GpSurrogate(n_restarts=config.gp_restarts,
                           max_evals=config.gp_max_evals,
                           seed=derive_seed(config.seed, _TAG_FIT),
                           warm_start=config.gp_warm_start)
    handle = spawn(list(config.bridge_command))
    return BridgeSurrogate(handle)


def _check_context_budget(config: RunConfig, surrogate) -> None:
    cap = getattr(getattr(surrogate, "contract", None), "max_context_size", None)
    if cap is not None and config.n_init + config.iters + config.m_cand > cap:
        raise InvalidConfig(
            f"n_init + iters + m_cand = {config.n_init + config.iters + config.m_cand} "
            f"exceeds the surrogate context cap {cap}")


def _evaluate(problem, x: np.ndarray) -> float:
    y = float(problem.evaluate(x))
    if not np.isfinite(y):
        raise NumericError(f"objective {problem.name} returned non-finite value {y!r} at {x!r}")
    return y


def _init_phase(trace: RunTrace, problem, config: RunConfig) -> ObservationSet:
    t0 = time.perf_counter()
    batch = lhs(config.n_init, problem.dim, derive_seed(config.seed, _TAG_INIT))
    alg_each = (time.perf_counter() - t0) / config.n_init
    X = batch.points
    ys = []
    best = -np.inf
    for i in range(config.n_init):
        te = time.perf_counter()
        y = _evaluate(problem, X[i])
        ys.append(y)
        best = max(best, y)
        trace.append(IterationRecord(
            index=i + 1, x_next=X[i], y_next=y, best_y=best, r_selected=0,
            elapsed_alg_s=alg_each,
            elapsed_total_s=alg_each + (time.perf_counter() - te)))
    return ObservationSet(X, np.array(ys))


def _condition_with_retry(surrogate, obs: ObservationSet) -> None:
    try:
        surrogate.condition(obs)
    except (FitFailed, InsufficientData):
        surrogate.condition(obs, fresh=True)


def _acq_scores(post: PosteriorBatch, acq: AcquisitionSpec, obs: ObservationSet,
                iter_seed: int) -> np.ndarray:
    if acq.kind == "ei":
        # EI in standardized-y units; the argmax is affine-invariant but the
        # ratio (mu - best)/sigma is better conditioned this way
        ym = float(obs.y.mean())
        ys = float(obs.y.std()) or 1.0
        post_std = PosteriorBatch((post.mean - ym) / ys, post.var / ys ** 2)
        return expected_improvement(post_std, (float(obs.y.max()) - ym) / ys)
    return score(post, acq, best_y=float(obs.y.max()), seed=iter_seed)


def _run_loop(config: RunConfig, problem, surrogate, algorithm: str,
              use_subspace: bool, run_id: str | None) -> RunTrace:
    _check_context_budget(config, surrogate)
    trace = RunTrace(
        run_id=run_id or f"{algorithm}__{problem.name}__{problem.dim}d__s{config.seed}",
        algorithm=algorithm, problem=problem.name, dim=problem.dim,
        seed=config.seed, n_init=config.n_init, f_star=problem.optimum_value)
    obs = _init_phase(trace, problem, config)

    for t in range(1, config.iters + 1):
        t0 = time.perf_counter()
        try:
            _condition_with_retry(surrogate, obs)
            cand = sobol(config.m_cand, problem.dim,
                         derive_seed(config.seed, _TAG_CAND, t)).points
            if use_subspace:
                post_full = surrogate.posterior(cand, need_grad=True)
                x_ref = centroid(obs, config.x_ref_mode)
                sub = identify_subspace(post_full.grad, config.r_policy, x_ref)
                z_tag = _TAG_Z if config.subspace_scheme != "random" else _TAG_Z_FRESH
                Z = uniform_cube(config.m_cand, sub.r,
                                 derive_seed(config.seed, z_tag, t),
                                 config.subspace_scheme).points
                X_acq = project_candidates(sub.x_ref, sub.V_r, Z, domain_clip=True)
                r_selected = sub.r
            else:
                X_acq = cand
                r_selected = 0
            post = surrogate.posterior(X_acq, need_grad=False)
            scores = _acq_scores(post, config.acq, obs,
                                 derive_seed(config.seed, _TAG_ACQ, t))
            x_next, _ = select_next(scores, X_acq)
        except (FitFailed, InsufficientData, BridgeError) as exc:
            trace.error = f"surrogate failure at iteration {t}: {exc}"
            return trace
        alg_s = time.perf_counter() - t0
        y_next = _evaluate(problem, x_next)
        total_s = time.perf_counter() - t0
        trace.append(IterationRecord(
            index=config.n_init + t, x_next=x_next, y_next=y_next,
            best_y=max(trace.records[-1].best_y, y_next),
            r_selected=r_selected, elapsed_alg_s=alg_s, elapsed_total_s=total_s))
        obs = obs.append(x_next, y_next)
    return trace


def run_gisbo(config: RunConfig, problem, surrogate, run_id: str | None = None) -> RunTrace:
    """Gradient-informed subspace BO (the full loop described above)."""
    return _run_loop(config, problem, surrogate, "gisbo", True, run_id)


def run_plain_bo(config: RunConfig, problem, surrogate, run_id: str | None = None) -> RunTrace:
    """Full-space BO ablation arm: same loop, subspace stage skipped."""
    return _run_loop(config, problem, surrogate, "plain_bo", False, run_id)


def run_random_search(config: RunConfig, problem, run_id: str | None = None) -> RunTrace:
    """LHS initialization followed by uniform-random queries."""
    trace = RunTrace(
        run_id=run_id or f"random_search__{problem.name}__{problem.dim}d__s{config.seed}",
        algorithm="random_search", problem=problem.name, dim=problem.dim,
        seed=config.seed, n_init=config.n_init, f_star=problem.optimum_value)
    _init_phase(trace, problem, config)
    for t in range(1, config.iters + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng(derive_seed(config.seed, _TAG_RAND, t))
        x_next = rng.random(problem.dim)
        alg_s = time.perf_counter() - t0
        y_next = _evaluate(problem, x_next)
        total_s = time.perf_counter() - t0
        trace.append(IterationRecord(
            index=config.n_init + t, x_next=x_next, y_next=y_next,
            best_y=max(trace.records[-1].best_y, y_next),
            r_selected=0, elapsed_alg_s=alg_s, elapsed_total_s=total_s))
    return trace


ALGORITHMS = {
    "gisbo": run_gisbo,
    "plain_bo": run_plain_bo,
    "random_search": run_random_search,
}
