"""Regret series and the nonparametric ranking protocol.

Per-problem medians over trials are ranked (rank 1 = best), the Friedman
test checks for any overall difference, pairwise Wilcoxon signed-rank tests
compare algorithm pairs, and Holm's step-down correction controls the
family-wise error rate. The Wilcoxon p-value is exact (full distribution of
the positive-rank sum, ties included) up to n = 20 paired differences and a
tie/continuity-corrected normal approximation above.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .core import RunTrace
from .errors import InvalidArgument

EXACT_WILCOXON_MAX_N = 20


@dataclass(frozen=True)
class ResultTable:
    """Median final values per (algorithm, problem) cell."""

    algorithms: tuple[str, ...]
    problems: tuple[str, ...]
    medians: np.ndarray  # (A, P)
    seeds_per_cell: int

    def __post_init__(self):
        med = np.array(self.medians, dtype=float, copy=True)
        A, P = len(self.algorithms), len(self.problems)
        if med.shape != (A, P):
            raise InvalidArgument(f"medians shape {med.shape} != ({A}, {P})")
        if not np.isfinite(med).all():
            raise InvalidArgument("result table has missing or non-finite cells")
        med.flags.writeable = False
        object.__setattr__(self, "medians", med)
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "problems", tuple(self.problems))


def regret_trace(trace: RunTrace, f_star: float) -> np.ndarray:
    """regret[t] = f_star - best_y[t], clamped at zero.

    A best value exceeding f_star by more than 1e-9 signals broken optimum
    metadata, so it warns rather than silently clamping.
    """
    best = trace.best_y_series()
    regret = f_star - best
    if regret.size and regret.min() < -1e-9:
        warnings.warn(
            f"best_y exceeds f_star by {-regret.min():.3g} on {trace.problem}; "
            "optimum metadata looks wrong", stacklevel=2)
    return np.clip(regret, 0.0, None)


def rank_columns(values: np.ndarray, maximize: bool = True) -> np.ndarray:
    """Rank each column: rank 1 = best, ties tie-averaged."""
    vals = np.asarray(values, dtype=float)
    signed = -vals if maximize else vals
    return np.apply_along_axis(rankdata, 0, signed)


def rank_table(results: ResultTable) -> np.ndarray:
    """(A, P) matrix of per-problem ranks of the medians (maximization)."""
    return rank_columns(results.medians, maximize=True)


class FriedmanResult(NamedTuple):
    statistic: float
    p_value: float


def friedman_test(ranks: np.ndarray) -> FriedmanResult:
    """Tie-corrected Friedman chi-square over an (A, P) rank matrix."""
    R = np.asarray(ranks, dtype=float)
    if R.ndim != 2:
        raise InvalidArgument("ranks must be an (A, P) matrix")
    A, P = R.shape
    if A < 2 or P < 2:
        raise InvalidArgument("friedman_test needs A >= 2 algorithms and P >= 2 problems")
    mean_ranks = R.mean(axis=1)
    stat = 12.0 * P / (A * (A + 1)) * np.sum((mean_ranks - (A + 1) / 2.0) ** 2)
    # tie correction: 1 - sum(t^3 - t) / (P * A * (A^2 - 1))
    ties = 0.0
    for j in range(P):
        _, counts = np.unique(R[:, j], return_counts=True)
        ties += float(np.sum(counts.astype(float) ** 3 - counts))
    denom = 1.0 - ties / (P * A * (A * A - 1.0))
    if denom <= 0.0:
        return FriedmanResult(0.0, 1.0)  # every column fully tied
    stat /= denom
    return FriedmanResult(float(stat), float(chi2.sf(stat, A - 1)))


class WilcoxonResult(NamedTuple):
    statistic: float  # W+ = rank sum of positive differences
    p_value: float
    n_effective: int
    all_zero: bool


def _exact_wplus_tail(ranks2: np.ndarray, w2: int) -> tuple[float, float]:
    """P(W+ <= w) and P(W+ >= w) by dynamic programming.

    `ranks2` holds doubled (hence integer) signed-rank magnitudes so that
    tie-averaged half ranks stay exact.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    denom = counts.sum()
    p_le = counts[: w2 + 1].sum() / denom
    p_ge = counts[w2:].sum() / denom
    return float(p_le), float(p_ge)


def wilcoxon_signed_rank(a, b, alternative: str = "two-sided") -> WilcoxonResult:
    """Paired Wilcoxon signed-rank test of a vs b.

    Zero differences are dropped (Wilcoxon's original convention) and the
    effective n reported. All-zero differences return p = 1 with a flag.
    `alternative` is "two-sided" (default), "greater" (a tends above b) or
    "less".
    """
    av = np.asarray(a, dtype=float)
    bv = np.asarray(b, dtype=float)
    if av.shape != bv.shape or av.ndim != 1:
        raise InvalidArgument("wilcoxon needs two equal-length 1-D samples")
    if alternative not in ("two-sided", "greater", "less"):
        raise InvalidArgument(f"unknown alternative {alternative!r}")
    d = av - bv
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, True)
    ranks = rankdata(np.abs(d))
    wplus = float(ranks[d > 0].sum())

    if n <= EXACT_WILCOXON_MAX_N:
        ranks2 = np.rint(2.0 * ranks).astype(int)
        w2 = int(np.rint(2.0 * wplus))
        p_le, p_ge = _exact_wplus_tail(ranks2, w2)
        if alternative == "greater":
            p = p_ge
        elif alternative == "less":
            p = p_le
        else:
            p = min(1.0, 2.0 * min(p_le, p_ge))
        return WilcoxonResult(wplus, float(p), n, False)

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(ranks, return_counts=True)
    var -= float(np.sum(counts.astype(float) ** 3 - counts)) / 48.0
    sd = np.sqrt(var)
    if alternative == "greater":
        z = (wplus - mu - 0.5) / sd
        p = norm.sf(z)
    elif alternative == "less":
        z = (wplus - mu + 0.5) / sd
        p = norm.cdf(z)
    else:
        z = (abs(wplus - mu) - 0.5) / sd
        p = 2.0 * norm.sf(z)
    return WilcoxonResult(wplus, float(min(1.0, p)), n, False)


def holm_correct(p_values, alpha: float) -> list[bool]:
    """Step-down Holm decisions, returned in the input order.

    Sort ascending; reject p_(i) while p_(i) <= alpha / (k - i + 1); the
    first failure stops the procedure.
    """
    ps = list(p_values)
    k = len(ps)
    if k == 0:
        return []
    if any(p < 0.0 or p > 1.0 for p in ps):
        raise InvalidArgument("p-values must lie in [0, 1]")
    order = np.argsort(ps, kind="stable")
    decisions = [False] * k
    for i, idx in enumerate(order, start=1):
        if ps[idx] <= alpha / (k - i + 1):
            decisions[idx] = True
        else:
            break
    return decisions


def pairwise_wilcoxon_holm(results: ResultTable, alpha: float = 0.05,
                           alternative: str = "two-sided") -> dict:
    """All algorithm pairs: Wilcoxon over per-problem medians, Holm-corrected."""
    A = len(results.algorithms)
    pairs = [(i, j) for i in range(A) for j in range(i + 1, A)]
    entries = []
    for i, j in pairs:
        res = wilcoxon_signed_rank(results.medians[i], results.medians[j],
                                   alternative=alternative)
        entries.append({
            "a": results.algorithms[i],
            "b": results.algorithms[j],
            "statistic": res.statistic,
            "p_value": res.p_value,
            "n_effective": res.n_effective,
            "all_zero": res.all_zero,
        })
    rejects = holm_correct([e["p_value"] for e in entries], alpha)
    for e, rej in zip(entries, rejects):
        e["reject"] = bool(rej)
    return {"alpha": alpha, "alternative": alternative, "pairs": entries}
