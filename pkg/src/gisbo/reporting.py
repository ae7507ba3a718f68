"""Trace CSV I/O, ranking reports and regret figures.

The trace schema is normative and stable:

    run_id,algorithm,problem,dim,seed,iteration,y,best_y,regret,r_selected,elapsed_alg_s,elapsed_total_s

Floats are written with shortest round-trip repr so re-reading a trace
recovers bit-identical values; regret is blank when the optimum is unknown.
Figures are SVG: per-problem mean-regret curves with 95% t-interval bands
over seeds, and an average-rank-evolution figure across problems.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
from scipy.stats import t as t_dist

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .core import RunTrace
from .errors import InvalidArgument
from .stats import (ResultTable, friedman_test, pairwise_wilcoxon_holm,
                    rank_columns, rank_table, regret_trace)

TRACE_HEADER = ("run_id,algorithm,problem,dim,seed,iteration,y,best_y,regret,"
                "r_selected,elapsed_alg_s,elapsed_total_s")

plt.rcParams["svg.hashsalt"] = "gisbo"


def _r(x: float) -> str:
    return repr(float(x))


def write_trace_csv(trace: RunTrace, path) -> Path:
    """Write one trial to CSV; returns the path written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    regret = None
    if trace.f_star is not None and trace.records:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            regret = regret_trace(trace, trace.f_star)
    with path.open("w", newline="") as fh:
        fh.write(TRACE_HEADER + "\n")
        for i, rec in enumerate(trace.records):
            row = [
                trace.run_id, trace.algorithm, trace.problem, str(trace.dim),
                str(trace.seed), str(rec.index), _r(rec.y_next), _r(rec.best_y),
                "" if regret is None else _r(regret[i]),
                str(rec.r_selected), _r(rec.elapsed_alg_s), _r(rec.elapsed_total_s),
            ]
            fh.write(",".join(row) + "\n")
    return path


@dataclass
class TraceData:
    """A trace read back from CSV (metadata plus per-iteration arrays)."""

    run_id: str
    algorithm: str
    problem: str
    dim: int
    seed: int
    iteration: np.ndarray
    y: np.ndarray
    best_y: np.ndarray
    regret: np.ndarray | None
    r_selected: np.ndarray
    elapsed_alg_s: np.ndarray
    elapsed_total_s: np.ndarray


def read_trace_csv(path) -> TraceData:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if ",".join(header) != TRACE_HEADER:
            raise InvalidArgument(f"{path} does not carry the trace schema header")
        rows = list(reader)
    if not rows:
        raise InvalidArgument(f"{path} holds no iterations")
    first = rows[0]
    regret_known = first[8] != ""
    arr = lambda col, dtype=float: np.array([dtype(r[col]) for r in rows])
    return TraceData(
        run_id=first[0], algorithm=first[1], problem=first[2],
        dim=int(first[3]), seed=int(first[4]),
        iteration=arr(5, int), y=arr(6), best_y=arr(7),
        regret=arr(8) if regret_known else None,
        r_selected=arr(9, int), elapsed_alg_s=arr(10), elapsed_total_s=arr(11),
    )


def discover_traces(results_dir) -> list[TraceData]:
    """Read every *.csv trace under a results directory (sorted for stability)."""
    out = []
    for p in sorted(Path(results_dir).glob("**/*.csv")):
        out.append(read_trace_csv(p))
    return out


def completeness_gaps(traces: list[TraceData]) -> list[tuple[str, str, int]]:
    """Missing (algorithm, problem, seed) triples vs. the full cross product."""
    algs = sorted({t.algorithm for t in traces})
    probs = sorted({t.problem for t in traces})
    seeds = sorted({t.seed for t in traces})
    have = {(t.algorithm, t.problem, t.seed) for t in traces}
    return [(a, p, s) for a in algs for p in probs for s in seeds
            if (a, p, s) not in have]


def build_result_table(traces: list[TraceData], at_iteration: int | None = None) -> ResultTable:
    """Median best_y per (algorithm, problem) cell over seeds."""
    gaps = completeness_gaps(traces)
    if gaps:
        raise InvalidArgument(f"incomplete result grid; missing {gaps}")
    algs = sorted({t.algorithm for t in traces})
    probs = sorted({t.problem for t in traces})
    seeds = sorted({t.seed for t in traces})
    med = np.empty((len(algs), len(probs)))
    for i, a in enumerate(algs):
        for j, p in enumerate(probs):
            finals = []
            for t in traces:
                if t.algorithm == a and t.problem == p:
                    idx = -1 if at_iteration is None else min(at_iteration, len(t.best_y)) - 1
                    finals.append(t.best_y[idx])
            med[i, j] = np.median(finals)
    return ResultTable(tuple(algs), tuple(probs), med, len(seeds))


def rank_report(table: ResultTable, alpha: float = 0.05) -> dict:
    """Ranks, Friedman test and Holm-corrected pairwise Wilcoxon results."""
    ranks = rank_table(table)
    avg = ranks.mean(axis=1)
    report = {
        "algorithms": list(table.algorithms),
        "problems": list(table.problems),
        "medians": table.medians.tolist(),
        "ranks": ranks.tolist(),
        "average_rank": {a: float(r) for a, r in zip(table.algorithms, avg)},
        "seeds_per_cell": table.seeds_per_cell,
    }
    if len(table.algorithms) >= 2 and len(table.problems) >= 2:
        fr = friedman_test(ranks)
        report["friedman"] = {"statistic": fr.statistic, "p_value": fr.p_value}
        report["pairwise_wilcoxon"] = pairwise_wilcoxon_holm(table, alpha=alpha)
    else:
        report["friedman"] = None
        report["note"] = "fewer than two algorithms or problems; tests skipped"
    return report


def rank_report_markdown(report: dict) -> str:
    lines = ["| algorithm | average rank |", "|---|---|"]
    for a, r in sorted(report["average_rank"].items(), key=lambda kv: kv[1]):
        lines.append(f"| {a} | {r:.3f} |")
    if report.get("friedman"):
        fr = report["friedman"]
        lines.append("")
        lines.append(f"Friedman chi-square {fr['statistic']:.4f}, p = {fr['p_value']:.3g}")
    if report.get("pairwise_wilcoxon"):
        lines.append("")
        lines.append("| pair | W+ | p | reject (Holm) |")
        lines.append("|---|---|---|---|")
        for e in report["pairwise_wilcoxon"]["pairs"]:
            lines.append(f"| {e['a']} vs {e['b']} | {e['statistic']:.1f} "
                         f"| {e['p_value']:.3g} | {e['reject']} |")
    return "\n".join(lines) + "\n"


def write_rank_report(report: dict, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jpath = out_dir / "rank_report.json"
    mpath = out_dir / "rank_report.md"
    jpath.write_text(json.dumps(report, indent=2) + "\n")
    mpath.write_text(rank_report_markdown(report))
    return jpath, mpath


def t_interval_halfwidth(values_2d: np.ndarray, confidence: float = 0.95) -> np.ndarray:
    """Half-width of the per-column t confidence interval over rows (seeds)."""
    n = values_2d.shape[0]
    if n < 2:
        return np.zeros(values_2d.shape[1])
    q = t_dist.ppf(0.5 + confidence / 2.0, n - 1)
    return q * values_2d.std(axis=0, ddof=1) / np.sqrt(n)


_DISPLAY_FLOOR = 1e-12  # keeps exact-zero regret drawable on a log axis


def _group_curves(traces: list[TraceData], problem: str, time_axis: bool):
    """Per algorithm: (x grid, per-seed matrix of regret-or-best curves, label)."""
    by_alg: dict[str, list[TraceData]] = {}
    for t in traces:
        if t.problem == problem:
            by_alg.setdefault(t.algorithm, []).append(t)
    use_regret = all(t.regret is not None for ts in by_alg.values() for t in ts)
    out = {}
    for alg, ts in sorted(by_alg.items()):
        L = min(len(t.best_y) for t in ts)
        ys = np.vstack([(t.regret[:L] if use_regret else t.best_y[:L]) for t in ts])
        if time_axis:
            x = np.vstack([np.cumsum(t.elapsed_alg_s[:L]) for t in ts]).mean(axis=0)
        else:
            x = np.arange(1, L + 1)
        out[alg] = (x, ys)
    return out, use_regret


def plot_regret(traces: list[TraceData], out_dir, mode: str = "regret_vs_iter",
                confidence: float = 0.95) -> list[Path]:
    """One SVG per problem: mean curve with a t-interval band over seeds."""
    if mode not in ("regret_vs_iter", "regret_vs_time"):
        raise InvalidArgument(f"unknown plot mode {mode!r}")
    time_axis = mode == "regret_vs_time"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for problem in sorted({t.problem for t in traces}):
        curves, use_regret = _group_curves(traces, problem, time_axis)
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for alg, (x, ys) in curves.items():
            mean = ys.mean(axis=0)
            if ys.shape[0] < 2:
                warnings.warn(f"{problem}/{alg}: single seed, no confidence band",
                              stacklevel=2)
                half = np.zeros_like(mean)
            else:
                half = t_interval_halfwidth(ys, confidence)
            shown = np.maximum(mean, _DISPLAY_FLOOR) if use_regret else mean
            line, = ax.plot(x, shown, label=alg)
            lo = np.maximum(mean - half, _DISPLAY_FLOOR) if use_regret else mean - half
            ax.fill_between(x, lo, np.maximum(mean + half, _DISPLAY_FLOOR),
                            alpha=0.2, color=line.get_color())
        if use_regret:
            ax.set_yscale("log")
            ax.set_ylabel("regret (f* - best observed)")
        else:
            ax.set_ylabel("best observed value")
        if time_axis:
            ax.set_xscale("log")
            ax.set_xlabel("algorithm runtime [s]")
        else:
            ax.set_xlabel("function evaluations")
        ax.set_title(problem)
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{mode}_{problem}.svg"
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def plot_rank_evolution(traces: list[TraceData], out_dir) -> Path:
    """Average per-problem rank of each algorithm, re-ranked per iteration."""
    algs = sorted({t.algorithm for t in traces})
    probs = sorted({t.problem for t in traces})
    if len(algs) < 2:
        raise InvalidArgument("rank evolution needs at least two algorithms")
    L = min(len(t.best_y) for t in traces)
    iters = np.arange(1, L + 1)
    avg_rank = np.zeros((len(algs), L))
    for k in range(L):
        med = np.empty((len(algs), len(probs)))
        for i, a in enumerate(algs):
            for j, p in enumerate(probs):
                vals = [t.best_y[k] for t in traces if t.algorithm == a and t.problem == p]
                med[i, j] = np.median(vals)
        avg_rank[:, k] = rank_columns(med, maximize=True).mean(axis=1)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for i, a in enumerate(algs):
        ax.plot(iters, avg_rank[i], label=a)
    ax.set_xlabel("function evaluations")
    ax.set_ylabel("average rank (lower is better)")
    ax.invert_yaxis()
    ax.legend()
    fig.tight_layout()
    path = out_dir / "rank_vs_iter.svg"
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return path
