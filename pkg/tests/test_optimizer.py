import numpy as np
import pytest

from gisbo.acquisition import AcquisitionSpec
from gisbo.benchmarks import Problem, make_embedded
from gisbo.core import SearchDomain
from gisbo.errors import FitFailed, InvalidConfig, NumericError
from gisbo.optimizer import (RunConfig, run_gisbo, run_plain_bo,
                             run_random_search)
from gisbo.subspace import RSelectionPolicy
from gisbo.surrogate import GpSurrogate


def quadratic_1d():
    domain = SearchDomain(np.zeros(1), np.ones(1))
    return Problem(
        name="quadratic_1d", dim=1, domain=domain,
        evaluate=lambda u: -float((u[0] - 0.6) ** 2),
        optimum_value=0.0, optimum_point=np.array([0.6]))


def linear_first_coord(dim=2):
    domain = SearchDomain(np.zeros(dim), np.ones(dim))
    return Problem(
        name="linear_x1", dim=dim, domain=domain,
        evaluate=lambda u: float(u[0]), optimum_value=1.0,
        optimum_point=np.ones(dim))


def small_config(**kw):
    base = dict(n_init=6, iters=4, m_cand=64,
                r_policy=RSelectionPolicy("fixed", fixed_r=2),
                gp_restarts=1, gp_max_evals=60, seed=0)
    base.update(kw)
    return RunConfig(**base)


class CountingProblem:
    def __init__(self, problem):
        self._p = problem
        self.calls = 0
        self.name = problem.name
        self.dim = problem.dim
        self.domain = problem.domain
        self.optimum_value = problem.optimum_value

    def evaluate(self, u):
        self.calls += 1
        return self._p.evaluate(u)


class RecordingSurrogate(GpSurrogate):
    def __init__(self, **kw):
        super().__init__(**kw)
        self.context_sizes = []

    def condition(self, obs, fresh=False):
        self.context_sizes.append(obs.n)
        super().condition(obs, fresh=fresh)


class FailsAtIteration:
    """Adapter stub whose fit breaks permanently at a given context size."""

    def __init__(self, fail_at_context: int):
        self.fail_at = fail_at_context
        self.inner = GpSurrogate(n_restarts=1, max_evals=40)
        self.contract = self.inner.contract

    def condition(self, obs, fresh=False):
        if obs.n >= self.fail_at:
            raise FitFailed("synthetic failure")
        self.inner.condition(obs, fresh=fresh)

    def posterior(self, X, need_grad=False):
        return self.inner.posterior(X, need_grad=need_grad)


def trace_payload(trace):
    """Everything except wall-clock timings."""
    return [(r.index, r.x_next.tobytes(), r.y_next, r.best_y, r.r_selected)
            for r in trace.records]


def test_invalid_configs_rejected():
    with pytest.raises(InvalidConfig):
        RunConfig(iters=0)
    with pytest.raises(InvalidConfig):
        RunConfig(n_init=1)
    with pytest.raises(InvalidConfig):
        RunConfig(m_cand=0)
    with pytest.raises(InvalidConfig):
        RunConfig(surrogate="bridge")
    with pytest.raises(InvalidConfig):
        RunConfig(subspace_scheme="halton")


def test_gisbo_finds_1d_quadratic_optimum():
    # oracle: dense-grid argmax of -(x-0.6)^2 on [0,1] is x=0.6
    grid = np.linspace(0, 1, 100_001)
    assert grid[np.argmax(-((grid - 0.6) ** 2))] == pytest.approx(0.6, abs=1e-5)
    hits = 0
    for seed in range(10):
        config = RunConfig(n_init=8, iters=30, m_cand=256,
                           r_policy=RSelectionPolicy("fixed", fixed_r=1),
                           gp_restarts=2, gp_max_evals=100, seed=seed)
        trace = run_gisbo(config, quadratic_1d(), GpSurrogate(seed=seed))
        assert trace.error is None
        best_idx = int(np.argmax(trace.y_series()))
        best_x = trace.records[best_idx].x_next[0]
        if abs(best_x - 0.6) <= 0.05:
            hits += 1
    assert hits >= 9, f"only {hits}/10 seeds converged"


def test_gisbo_bit_identical_replay():
    problem = quadratic_1d()
    t1 = run_gisbo(small_config(n_init=4, iters=3, m_cand=32), problem, GpSurrogate(seed=1))
    t2 = run_gisbo(small_config(n_init=4, iters=3, m_cand=32), problem, GpSurrogate(seed=1))
    assert trace_payload(t1) == trace_payload(t2)


def test_budget_exactness_and_context_growth():
    problem = CountingProblem(linear_first_coord(3))
    config = small_config(n_init=5, iters=4, m_cand=32,
                          r_policy=RSelectionPolicy("fixed", fixed_r=2))
    surrogate = RecordingSurrogate(n_restarts=1, max_evals=40)
    trace = run_gisbo(config, problem, surrogate)
    assert trace.error is None
    assert problem.calls == config.n_init + config.iters
    assert trace.n_evaluations == config.n_init + config.iters
    assert surrogate.context_sizes == [config.n_init + t - 1
                                       for t in range(1, config.iters + 1)]


def test_all_queried_points_in_unit_cube_and_r_logged():
    problem = linear_first_coord(4)
    config = small_config(n_init=4, iters=5, m_cand=32,
                          r_policy=RSelectionPolicy("fixed", fixed_r=3))
    trace = run_gisbo(config, problem, GpSurrogate(seed=3))
    assert trace.error is None
    for rec in trace.records:
        assert np.all(rec.x_next >= 0.0) and np.all(rec.x_next <= 1.0)
    rs = trace.r_selected_series()
    assert np.all(rs[: config.n_init] == 0)
    bo_phase = rs[config.n_init:]
    assert np.all(bo_phase == 3)  # constant under a fixed policy


def test_full_space_subspace_spans_everything():
    from gisbo.subspace import identify_subspace, project_candidates
    rng = np.random.default_rng(0)
    grads = rng.standard_normal((50, 5))
    sub = identify_subspace(grads, RSelectionPolicy("fixed", fixed_r=5), np.full(5, 0.5))
    assert sub.r == 5
    Z = rng.uniform(-1, 1, (30, 5))
    X = project_candidates(sub.x_ref, sub.V_r, Z, domain_clip=False)
    P = np.eye(5) - sub.V_r @ sub.V_r.T
    assert np.linalg.norm(P @ (X - sub.x_ref).T) <= 1e-10


def test_random_search_order_statistics():
    # oracle: P(max over 500 uniform draws < 0.99) = 0.99^500 ~ 0.0066
    hits = 0
    for seed in range(10):
        config = RunConfig(n_init=100, iters=400, m_cand=1, seed=seed)
        trace = run_random_search(config, linear_first_coord(2))
        assert trace.n_evaluations == 500
        if trace.final_best() >= 0.99:
            hits += 1
    assert hits >= 9


def test_random_search_monotone_and_deterministic():
    config = RunConfig(n_init=5, iters=10, m_cand=1, seed=4)
    t1 = run_random_search(config, linear_first_coord(2))
    t2 = run_random_search(config, linear_first_coord(2))
    assert trace_payload(t1) == trace_payload(t2)
    best = t1.best_y_series()
    assert np.all(np.diff(best) >= 0)
    t1.validate()


def test_plain_bo_runs_and_replays():
    problem = quadratic_1d()
    t1 = run_plain_bo(small_config(n_init=4, iters=3, m_cand=32), problem, GpSurrogate(seed=5))
    t2 = run_plain_bo(small_config(n_init=4, iters=3, m_cand=32), problem, GpSurrogate(seed=5))
    assert trace_payload(t1) == trace_payload(t2)
    assert np.all(t1.r_selected_series() == 0)
    t1.validate()


def test_embedded_problem_smoke_run():
    problem = make_embedded("branin2", 2, 6, seed=0)
    config = small_config(n_init=6, iters=3, m_cand=64,
                          r_policy=RSelectionPolicy("variance_explained", threshold=0.95))
    trace = run_gisbo(config, problem, GpSurrogate(seed=6))
    assert trace.error is None
    rs = trace.r_selected_series()[config.n_init:]
    assert np.all((rs >= 1) & (rs <= 6))


def test_surrogate_failure_truncates_trace():
    problem = linear_first_coord(2)
    config = small_config(n_init=4, iters=6, m_cand=16)
    fail_context = 4 + 2  # fails when conditioning for BO iteration 3
    trace = run_gisbo(config, problem, FailsAtIteration(fail_context))
    assert trace.error is not None and "iteration 3" in trace.error
    assert trace.n_evaluations == 4 + 2  # init rows plus two finished iterations


def test_context_budget_checked_against_surrogate_cap():
    class CappedSurrogate(GpSurrogate):
        def __init__(self):
            super().__init__()
            from gisbo.surrogate import SurrogateContract
            self.contract = SurrogateContract("capped", True, max_context_size=10)

    config = small_config(n_init=6, iters=4, m_cand=16)  # 6 + 4 + 16 > 10
    with pytest.raises(InvalidConfig, match="context cap"):
        run_gisbo(config, linear_first_coord(2), CappedSurrogate())


def test_nonfinite_objective_aborts():
    domain = SearchDomain(np.zeros(2), np.ones(2))
    bad = Problem(name="bad", dim=2, domain=domain,
                  evaluate=lambda u: float("nan"))
    with pytest.raises(NumericError):
        run_random_search(RunConfig(n_init=3, iters=1, m_cand=1, seed=0), bad)


def test_acquisition_variants_run():
    problem = quadratic_1d()
    for acq in (AcquisitionSpec("ucb_sampling", S=32),
                AcquisitionSpec("ei"),
                AcquisitionSpec("ucb_quantile", beta=1.96)):
        config = small_config(n_init=4, iters=2, m_cand=16, acq=acq,
                              r_policy=RSelectionPolicy("fixed", fixed_r=1))
        trace = run_gisbo(config, problem, GpSurrogate(seed=7))
        assert trace.error is None
        trace.validate()
