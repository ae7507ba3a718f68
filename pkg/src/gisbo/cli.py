"""Command-line entry point.

Subcommands: run | ablate | rank | plot | list-problems | serve-echo.
Experiment configs are JSON objects with flat dotted keys (see configs/ for
shipped examples); every results directory receives a frozen copy of the
resolved config so a run can be replayed from its own artifacts. Trials run
in a process pool sized by --jobs and share nothing but the filesystem.

Exit codes: 0 ok, 1 trial failure or refused overwrite, 2 config errors,
3 incomplete result grids.
"""
from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import benchmarks, bridge, reporting
from .acquisition import AcquisitionSpec
from .errors import GisboError, InvalidConfig
from .optimizer import RunConfig, build_surrogate, run_gisbo, run_plain_bo, run_random_search
from .subspace import RSelectionPolicy

BRIDGE_ENV_VAR = "GISBO_BRIDGE_CMD"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INCOMPLETE = 3

# quantile betas for the acquisition sweep: Phi^-1(0.95), Phi^-1(0.975)
_BETA_Q95 = 1.6448536269514722
_BETA_Q975 = 1.959963984540054

ABLATION_KINDS = ("r", "beta", "subspace_sampler", "x_ref", "n_init")


@dataclass(frozen=True)
class ProblemSpec:
    name: str = "ackley"
    dim: int = 10
    variant: str = "plain"  # "plain" | "shifted" | "embedded"
    shift_seed: int = 0
    inner: str = "branin2"
    intrinsic_dim: int = 2
    embed_seed: int = 0

    def build(self) -> benchmarks.Problem:
        if self.variant == "plain":
            return benchmarks.make(self.name, self.dim)
        if self.variant == "shifted":
            return benchmarks.make_shifted(self.name, self.dim, self.shift_seed)
        if self.variant == "embedded":
            return benchmarks.make_embedded(self.inner, self.intrinsic_dim,
                                            self.dim, self.embed_seed)
        raise InvalidConfig(f"unknown problem variant {self.variant!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    problems: tuple[ProblemSpec, ...]
    seeds: tuple[int, ...]
    output_dir: str
    algorithms: tuple[str, ...] = ("gisbo",)
    n_init: int = 20
    iters: int = 150
    m_cand: int = 1024
    r_kind: str = "fixed"
    fixed_r: int = 10
    variance_threshold: float = 0.95
    acq_kind: str = "ucb_quantile"
    beta: float = 2.33
    samples: int = 512
    subspace_scheme: str = "uniform"
    x_ref_mode: str = "centroid"
    surrogate: str = "gp"
    bridge_cmd: tuple[str, ...] | None = None
    gp_restarts: int = 3
    gp_max_evals: int = 200

    def __post_init__(self):
        if not self.seeds:
            raise InvalidConfig("seeds must be a nonempty list")
        if len(set(self.seeds)) != len(self.seeds):
            raise InvalidConfig("seeds must be distinct")
        for a in self.algorithms:
            if a not in ("gisbo", "plain_bo", "random_search"):
                raise InvalidConfig(f"unknown algorithm {a!r}")
        self.run_config(self.seeds[0])  # fail fast on bad enum values

    def run_config(self, seed: int) -> RunConfig:
        return RunConfig(
            n_init=self.n_init, iters=self.iters, m_cand=self.m_cand,
            r_policy=RSelectionPolicy(self.r_kind, self.fixed_r, self.variance_threshold),
            acq=AcquisitionSpec(self.acq_kind, self.beta, self.samples),
            subspace_scheme=self.subspace_scheme, x_ref_mode=self.x_ref_mode,
            surrogate=self.surrogate, bridge_command=self.bridge_cmd, seed=seed,
            gp_restarts=self.gp_restarts, gp_max_evals=self.gp_max_evals)


_PROBLEM_KEYS = {
    "name": ("name", str), "dim": ("dim", int), "variant": ("variant", str),
    "shift_seed": ("shift_seed", int), "inner": ("inner", str),
    "intrinsic_dim": ("intrinsic_dim", int), "embed_seed": ("embed_seed", int),
}

_TOP_KEYS = {
    "algorithm": ("algorithms", lambda v: (str(v),)),
    "algorithms": ("algorithms", lambda v: tuple(str(a) for a in v)),
    "seeds": ("seeds", lambda v: tuple(int(s) for s in v)),
    "output_dir": ("output_dir", str),
    "run.n_init": ("n_init", int),
    "run.iters": ("iters", int),
    "run.m_cand": ("m_cand", int),
    "run.r_policy": ("r_kind", str),
    "run.fixed_r": ("fixed_r", int),
    "run.variance_threshold": ("variance_threshold", float),
    "run.acq": ("acq_kind", str),
    "run.beta": ("beta", float),
    "run.samples": ("samples", int),
    "run.subspace_scheme": ("subspace_scheme", str),
    "run.x_ref_mode": ("x_ref_mode", str),
    "surrogate": ("surrogate", str),
    "surrogate.bridge_cmd": ("bridge_cmd", lambda v: tuple(str(c) for c in v)),
    "gp.restarts": ("gp_restarts", int),
    "gp.max_evals": ("gp_max_evals", int),
}


class ConfigError(Exception):
    pass


# metadata written into frozen ablation configs; ignored when re-loaded
_METADATA_KEYS = {"ablation", "arms"}


def _parse_problem(obj: dict, where: str) -> ProblemSpec:
    kwargs = {}
    for key, value in obj.items():
        short = key.removeprefix("problem.")
        if short not in _PROBLEM_KEYS:
            raise ConfigError(f"unknown problem field {key!r} in {where}")
        name, conv = _PROBLEM_KEYS[short]
        kwargs[name] = conv(value)
    try:
        return ProblemSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad problem spec in {where}: {exc}") from exc


def parse_experiment_config(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a single JSON object")
    kwargs: dict = {}
    problem_fields: dict = {}
    for key, value in obj.items():
        if key == "problems":
            kwargs["problems"] = tuple(
                _parse_problem(p, f"problems[{i}]") for i, p in enumerate(value))
        elif key.startswith("problem."):
            problem_fields[key] = value
        elif key in _TOP_KEYS:
            name, conv = _TOP_KEYS[key]
            try:
                kwargs[name] = conv(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for field {key!r}: {exc}") from exc
        elif key in _METADATA_KEYS:
            continue
        else:
            raise ConfigError(f"unknown config field {key!r}")
    if problem_fields:
        if "problems" in kwargs:
            raise ConfigError("give either problem.* keys or a problems list, not both")
        kwargs["problems"] = (_parse_problem(problem_fields, "problem.*"),)
    if "problems" not in kwargs:
        raise ConfigError("config must name a problem (problem.* keys or problems list)")
    if "seeds" not in kwargs:
        raise ConfigError("config must list trial seeds")
    if "output_dir" not in kwargs:
        raise ConfigError("config must set output_dir")
    env_cmd = os.environ.get(BRIDGE_ENV_VAR)
    if env_cmd:
        kwargs["bridge_cmd"] = tuple(shlex.split(env_cmd))
    try:
        return ExperimentConfig(**kwargs)
    except (InvalidConfig, GisboError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_experiment_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"unparsable JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_experiment_config(obj)


def resolved_config_dict(cfg: ExperimentConfig) -> dict:
    """Dotted-key form of a config; loadable by `parse_experiment_config`."""
    out = {
        "problems": [asdict(p) for p in cfg.problems],
        "algorithms": list(cfg.algorithms),
        "seeds": list(cfg.seeds),
        "output_dir": cfg.output_dir,
        "run.n_init": cfg.n_init,
        "run.iters": cfg.iters,
        "run.m_cand": cfg.m_cand,
        "run.r_policy": cfg.r_kind,
        "run.fixed_r": cfg.fixed_r,
        "run.variance_threshold": cfg.variance_threshold,
        "run.acq": cfg.acq_kind,
        "run.beta": cfg.beta,
        "run.samples": cfg.samples,
        "run.subspace_scheme": cfg.subspace_scheme,
        "run.x_ref_mode": cfg.x_ref_mode,
        "surrogate": cfg.surrogate,
        "gp.restarts": cfg.gp_restarts,
        "gp.max_evals": cfg.gp_max_evals,
    }
    if cfg.bridge_cmd is not None:
        out["surrogate.bridge_cmd"] = list(cfg.bridge_cmd)
    return out


def _problem_label(spec: ProblemSpec) -> str:
    return spec.build().name if spec.variant != "plain" else f"{spec.name}_{spec.dim}d"


def experiment_from_dict(obj: dict) -> ExperimentConfig:
    """Rebuild an ExperimentConfig from its resolved (dotted-key) form."""
    return parse_experiment_config(obj)


def _run_trial(payload: dict) -> dict:
    """Worker-side trial runner; payload is plain JSON-compatible data."""
    spec = ProblemSpec(**payload["problem"])
    problem = spec.build()
    exp = experiment_from_dict(payload["experiment"])
    config = exp.run_config(payload["seed"])
    algorithm = payload["algorithm"]
    label = payload["label"]
    run_id = f"{label}__{problem.name}__s{payload['seed']}"
    try:
        if algorithm == "random_search":
            trace = run_random_search(config, problem, run_id=run_id)
        else:
            surrogate = build_surrogate(config)
            try:
                if algorithm == "gisbo":
                    trace = run_gisbo(config, problem, surrogate, run_id=run_id)
                else:
                    trace = run_plain_bo(config, problem, surrogate, run_id=run_id)
            finally:
                close = getattr(surrogate, "close", None)
                if close:
                    close()
        trace.algorithm = label
        path = Path(payload["output_dir"]) / f"{run_id}.csv"
        reporting.write_trace_csv(trace, path)
        return {"run_id": run_id, "ok": trace.error is None, "error": trace.error,
                "path": str(path)}
    except GisboError as exc:
        return {"run_id": run_id, "ok": False, "error": str(exc), "path": None}


def _execute_trials(payloads: list[dict], jobs: int) -> list[dict]:
    if jobs <= 1 or len(payloads) <= 1:
        return [_run_trial(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_trial, payloads))


def _prepare_output_dir(out_dir: Path, overwrite: bool) -> bool:
    marker = out_dir / "config.resolved.json"
    if (marker.exists() or any(out_dir.glob("*.csv"))) and not overwrite:
        return False
    out_dir.mkdir(parents=True, exist_ok=True)
    return True


def _apply_seed_offset(cfg: ExperimentConfig, offset: int) -> ExperimentConfig:
    if offset == 0:
        return cfg
    return replace(cfg, seeds=tuple(s + offset for s in cfg.seeds))


def cmd_run(args) -> int:
    try:
        cfg = load_experiment_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = _apply_seed_offset(cfg, args.seed_offset)
    out_dir = Path(cfg.output_dir)
    if not _prepare_output_dir(out_dir, args.overwrite):
        print(f"refusing to write into {out_dir}: already holds results "
              "(pass --overwrite to replace)", file=sys.stderr)
        return EXIT_FAILURE
    (out_dir / "config.resolved.json").write_text(
        json.dumps(resolved_config_dict(cfg), indent=2) + "\n")
    payloads = []
    exp_dict = resolved_config_dict(cfg)
    for spec in cfg.problems:
        for algorithm in cfg.algorithms:
            for seed in cfg.seeds:
                payloads.append({
                    "problem": asdict(spec), "experiment": exp_dict,
                    "algorithm": algorithm, "label": algorithm,
                    "seed": seed, "output_dir": str(out_dir)})
    results = _execute_trials(payloads, args.jobs)
    failures = [r for r in results if not r["ok"]]
    for r in results:
        status = "ok" if r["ok"] else f"FAILED ({r['error']})"
        print(f"{r['run_id']}: {status}")
    return EXIT_FAILURE if failures else EXIT_OK


def ablation_arms(kind: str, cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """The sweep grid for one knob, as (label, modified config) pairs."""
    if kind == "r":
        arms = [(f"r={r}", replace(cfg, r_kind="fixed", fixed_r=r))
                for r in (5, 10, 15, 20, 40)]
        arms += [(f"var={v}", replace(cfg, r_kind="variance_explained",
                                      variance_threshold=v))
                 for v in (0.925, 0.95, 0.975)]
        return arms
    if kind == "beta":
        return [
            ("q=0.95", replace(cfg, acq_kind="ucb_quantile", beta=_BETA_Q95)),
            ("q=0.975", replace(cfg, acq_kind="ucb_quantile", beta=_BETA_Q975)),
            ("S=256", replace(cfg, acq_kind="ucb_sampling", samples=256)),
            ("S=512", replace(cfg, acq_kind="ucb_sampling", samples=512)),
            ("S=1024", replace(cfg, acq_kind="ucb_sampling", samples=1024)),
        ]
    if kind == "subspace_sampler":
        return [(s, replace(cfg, subspace_scheme=s)) for s in ("uniform", "random", "sobol")]
    if kind == "x_ref":
        return [(m, replace(cfg, x_ref_mode=m)) for m in ("centroid", "incumbent")]
    if kind == "n_init":
        return [(f"n_init={n}", replace(cfg, n_init=n)) for n in (20, 50, 200, 1000)]
    raise InvalidConfig(f"unknown ablation kind {kind!r}")


def cmd_ablate(args) -> int:
    try:
        cfg = load_experiment_config(args.config)
        arms = ablation_arms(args.kind, cfg)
    except (ConfigError, InvalidConfig) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = _apply_seed_offset(cfg, args.seed_offset)
    out_dir = Path(cfg.output_dir)
    if not _prepare_output_dir(out_dir, args.overwrite):
        print(f"refusing to write into {out_dir}: already holds results "
              "(pass --overwrite to replace)", file=sys.stderr)
        return EXIT_FAILURE
    frozen = dict(resolved_config_dict(cfg))
    frozen["ablation"] = args.kind
    frozen["arms"] = [label for label, _ in arms]
    (out_dir / "config.resolved.json").write_text(json.dumps(frozen, indent=2) + "\n")
    payloads = []
    for label, arm_cfg in arms:
        arm_dict = resolved_config_dict(arm_cfg)
        for spec in cfg.problems:
            for seed in cfg.seeds:
                payloads.append({
                    "problem": asdict(spec), "experiment": arm_dict,
                    "algorithm": "gisbo", "label": label,
                    "seed": seed, "output_dir": str(out_dir)})
    results = _execute_trials(payloads, args.jobs)
    failures = [r for r in results if not r["ok"]]
    for r in results:
        status = "ok" if r["ok"] else f"FAILED ({r['error']})"
        print(f"{r['run_id']}: {status}")
    if failures:
        return EXIT_FAILURE
    traces = reporting.discover_traces(out_dir)
    table = reporting.build_result_table(traces)
    report = reporting.rank_report(table)
    reporting.write_rank_report(report, out_dir)
    print(f"wrote rank report for {len(arms)} arms to {out_dir}")
    return EXIT_OK


def cmd_rank(args) -> int:
    traces = reporting.discover_traces(args.results_dir)
    if not traces:
        print(f"no trace CSVs under {args.results_dir}", file=sys.stderr)
        return EXIT_INCOMPLETE
    gaps = reporting.completeness_gaps(traces)
    if gaps:
        print("incomplete result grid; missing (algorithm, problem, seed):",
              file=sys.stderr)
        for a, p, s in gaps:
            print(f"  {a}, {p}, {s}", file=sys.stderr)
        return EXIT_INCOMPLETE
    table = reporting.build_result_table(traces)
    report = reporting.rank_report(table)
    jpath, mpath = reporting.write_rank_report(report, args.results_dir)
    if report.get("friedman") is None:
        print("single algorithm: ranks are all 1, Friedman test skipped")
    print(f"wrote {jpath} and {mpath}")
    return EXIT_OK


def cmd_plot(args) -> int:
    traces = reporting.discover_traces(args.results_dir)
    if not traces:
        print(f"no trace CSVs under {args.results_dir}", file=sys.stderr)
        return EXIT_INCOMPLETE
    out_dir = Path(args.results_dir) / "figures"
    if args.mode == "rank_vs_iter":
        path = reporting.plot_rank_evolution(traces, out_dir)
        print(f"wrote {path}")
    else:
        paths = reporting.plot_regret(traces, out_dir, mode=args.mode)
        for p in paths:
            print(f"wrote {p}")
    return EXIT_OK


def cmd_list_problems(args) -> int:
    dims = args.dims or [10]
    entries = []
    for name in benchmarks.PROBLEM_NAMES:
        for dim in dims:
            try:
                entries.append(benchmarks.problem_metadata(benchmarks.make(name, dim)))
            except GisboError:
                continue
    print(json.dumps(entries, indent=2))
    return EXIT_OK


def cmd_serve_echo(args) -> int:
    return bridge.serve_echo(max_context_size=args.max_context_size)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gisbo",
        description="Gradient-informed subspace Bayesian optimization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
        p.add_argument("--overwrite", action="store_true",
                       help="allow writing into a directory that already holds results")
        p.add_argument("--seed-offset", type=int, default=0, dest="seed_offset",
                       help="add this offset to every seed in the config")

    p_run = sub.add_parser("run", help="run trials from a config")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_abl = sub.add_parser("ablate", help="run a sweep over one knob")
    p_abl.add_argument("kind", choices=ABLATION_KINDS)
    add_common(p_abl)
    p_abl.set_defaults(func=cmd_ablate)

    p_rank = sub.add_parser("rank", help="rank completed traces")
    p_rank.add_argument("results_dir")
    p_rank.set_defaults(func=cmd_rank)

    p_plot = sub.add_parser("plot", help="render regret / rank figures")
    p_plot.add_argument("results_dir")
    p_plot.add_argument("--mode", default="regret_vs_iter",
                        choices=("regret_vs_iter", "regret_vs_time", "rank_vs_iter"))
    p_plot.set_defaults(func=cmd_plot)

    p_list = sub.add_parser("list-problems", help="print the problem catalog as JSON")
    p_list.add_argument("--dims", type=int, nargs="*", default=None)
    p_list.set_defaults(func=cmd_list_problems)

    p_echo = sub.add_parser("serve-echo", help="run the protocol test stub on stdio")
    p_echo.add_argument("--max-context-size", type=int, default=10000,
                        dest="max_context_size")
    p_echo.set_defaults(func=cmd_serve_echo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
