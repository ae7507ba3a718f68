import csv
import json

import numpy as np
import pytest

from gisbo.cli import (ablation_arms, load_experiment_config, main,
                       parse_experiment_config)
from gisbo.reporting import TRACE_HEADER


def write_config(tmp_path, out_name="results", **overrides):
    cfg = {
        "problem.name": "ackley",
        "problem.dim": 10,
        "algorithms": ["gisbo"],
        "seeds": [0, 1, 2],
        "output_dir": str(tmp_path / out_name),
        "run.n_init": 4,
        "run.iters": 20,
        "run.m_cand": 64,
        "run.fixed_r": 3,
        "gp.restarts": 1,
        "gp.max_evals": 40,
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


def read_rows(csv_path):
    with open(csv_path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def strip_timing(rows):
    return [r[:10] for r in rows]


def test_run_smoke_three_csvs(tmp_path):
    cfg_path, cfg = write_config(tmp_path)
    assert main(["run", "--config", str(cfg_path)]) == 0
    out = tmp_path / "results"
    csvs = sorted(out.glob("*.csv"))
    assert len(csvs) == 3
    header, rows = read_rows(csvs[0])
    assert ",".join(header) == TRACE_HEADER
    assert len(rows) == cfg["run.n_init"] + cfg["run.iters"]
    assert (out / "config.resolved.json").exists()


def test_run_bad_enum_exits_2(tmp_path, capsys):
    cfg_path, _ = write_config(tmp_path, **{"run.acq": "thompson"})
    assert main(["run", "--config", str(cfg_path)]) == 2
    assert "acq" in capsys.readouterr().err


def test_run_unknown_field_exits_2(tmp_path, capsys):
    cfg_path, _ = write_config(tmp_path, **{"run.cadence": 5})
    assert main(["run", "--config", str(cfg_path)]) == 2
    assert "run.cadence" in capsys.readouterr().err


def test_run_unparsable_json_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"problem.name": "ackley",}')
    assert main(["run", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "line" in err and "column" in err


def test_run_refuses_overwrite(tmp_path, capsys):
    cfg_path, _ = write_config(tmp_path, **{"run.iters": 1, "seeds": [0],
                                            "problem.dim": 3, "run.n_init": 2,
                                            "run.m_cand": 8})
    assert main(["run", "--config", str(cfg_path)]) == 0
    assert main(["run", "--config", str(cfg_path)]) == 1
    assert "overwrite" in capsys.readouterr().err
    assert main(["run", "--config", str(cfg_path), "--overwrite"]) == 0


def test_seed_offset(tmp_path):
    cfg_path, _ = write_config(tmp_path, **{"run.iters": 1, "seeds": [0],
                                            "problem.dim": 2, "run.n_init": 2,
                                            "run.m_cand": 8})
    assert main(["run", "--config", str(cfg_path), "--seed-offset", "100"]) == 0
    csvs = list((tmp_path / "results").glob("*.csv"))
    assert len(csvs) == 1 and "s100" in csvs[0].name


def test_config_round_trip_replays_bit_identically(tmp_path):
    cfg_path, _ = write_config(tmp_path, out_name="first",
                               **{"run.iters": 3, "seeds": [5],
                                  "problem.dim": 4, "run.n_init": 3,
                                  "run.m_cand": 16})
    assert main(["run", "--config", str(cfg_path)]) == 0
    frozen = tmp_path / "first" / "config.resolved.json"
    resolved = json.loads(frozen.read_text())
    resolved["output_dir"] = str(tmp_path / "second")
    replay_cfg = tmp_path / "replay.json"
    replay_cfg.write_text(json.dumps(resolved))
    assert main(["run", "--config", str(replay_cfg)]) == 0
    first = sorted((tmp_path / "first").glob("*.csv"))[0]
    second = sorted((tmp_path / "second").glob("*.csv"))[0]
    _, rows1 = read_rows(first)
    _, rows2 = read_rows(second)
    assert strip_timing(rows1) == strip_timing(rows2)


def test_resolved_config_accepts_problems_list_form(tmp_path):
    obj = {
        "problems": [
            {"name": "ackley", "dim": 3},
            {"name": "levy", "dim": 3, "variant": "plain"},
        ],
        "algorithms": ["random_search"],
        "seeds": [0, 1],
        "output_dir": str(tmp_path / "out"),
        "run.n_init": 2, "run.iters": 2, "run.m_cand": 4,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(obj))
    cfg = load_experiment_config(path)
    assert len(cfg.problems) == 2
    assert main(["run", "--config", str(path), "--jobs", "2"]) == 0
    assert len(list((tmp_path / "out").glob("*.csv"))) == 4


def test_ablation_arm_grids():
    cfg = parse_experiment_config({
        "problem.name": "ackley", "problem.dim": 3, "seeds": [0],
        "output_dir": "x"})
    r_arms = ablation_arms("r", cfg)
    assert [label for label, _ in r_arms] == [
        "r=5", "r=10", "r=15", "r=20", "r=40",
        "var=0.925", "var=0.95", "var=0.975"]
    beta_arms = ablation_arms("beta", cfg)
    assert [label for label, _ in beta_arms] == [
        "q=0.95", "q=0.975", "S=256", "S=512", "S=1024"]
    assert beta_arms[0][1].beta == pytest.approx(1.6449, abs=1e-4)
    assert [l for l, _ in ablation_arms("subspace_sampler", cfg)] == [
        "uniform", "random", "sobol"]
    assert [l for l, _ in ablation_arms("x_ref", cfg)] == ["centroid", "incumbent"]
    assert [l for l, _ in ablation_arms("n_init", cfg)] == [
        "n_init=20", "n_init=50", "n_init=200", "n_init=1000"]


def test_ablate_x_ref_end_to_end(tmp_path):
    cfg_path, _ = write_config(
        tmp_path, out_name="xref",
        **{"problem.dim": 3, "run.n_init": 3, "run.iters": 2,
           "run.m_cand": 16, "seeds": [0, 1],
           "problems": None})
    cfg = json.loads(cfg_path.read_text())
    del cfg["problems"]
    cfg["problems"] = [{"name": "ackley", "dim": 3}, {"name": "levy", "dim": 3}]
    for k in ("problem.name", "problem.dim"):
        cfg.pop(k, None)
    cfg_path.write_text(json.dumps(cfg))
    assert main(["ablate", "x_ref", "--config", str(cfg_path)]) == 0
    out = tmp_path / "xref"
    csvs = list(out.glob("*.csv"))
    assert len(csvs) == 2 * 2 * 2  # arms x problems x seeds
    report = json.loads((out / "rank_report.json").read_text())
    assert set(report["algorithms"]) == {"centroid", "incumbent"}


def test_ablate_r_end_to_end_eight_arms(tmp_path):
    obj = {
        "problems": [{"name": "ackley", "dim": 3}, {"name": "levy", "dim": 3}],
        "seeds": [0, 1],
        "output_dir": str(tmp_path / "rsweep"),
        "run.n_init": 3, "run.iters": 2, "run.m_cand": 16,
        "gp.restarts": 1, "gp.max_evals": 25,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(obj))
    assert main(["ablate", "r", "--config", str(cfg_path), "--jobs", "2"]) == 0
    out = tmp_path / "rsweep"
    assert len(list(out.glob("*.csv"))) == 8 * 2 * 2  # arms x problems x seeds
    report = json.loads((out / "rank_report.json").read_text())
    assert len(report["algorithms"]) == 8
    assert "var=0.95" in report["algorithms"] and "r=40" in report["algorithms"]
    # the frozen copy replays through the same subcommand
    frozen = json.loads((out / "config.resolved.json").read_text())
    assert frozen["ablation"] == "r" and len(frozen["arms"]) == 8
    frozen["output_dir"] = str(tmp_path / "rsweep2")
    (tmp_path / "replay.json").write_text(json.dumps(frozen))
    assert main(["ablate", "r", "--config", str(tmp_path / "replay.json")]) == 0


def test_rank_single_algorithm_notice(tmp_path, capsys):
    cfg_path, _ = write_config(tmp_path, out_name="single",
                               **{"problem.dim": 3, "run.n_init": 2,
                                  "run.iters": 1, "run.m_cand": 8,
                                  "seeds": [0, 1], "algorithms": ["random_search"]})
    assert main(["run", "--config", str(cfg_path)]) == 0
    assert main(["rank", str(tmp_path / "single")]) == 0
    out = capsys.readouterr().out
    assert "Friedman test skipped" in out
    report = json.loads((tmp_path / "single" / "rank_report.json").read_text())
    assert report["friedman"] is None
    assert all(r == [1.0] * len(report["problems"]) for r in report["ranks"])


def test_rank_missing_seed_exits_3(tmp_path, capsys):
    cfg_path, _ = write_config(tmp_path, out_name="gaps",
                               **{"problem.dim": 2, "run.n_init": 2,
                                  "run.iters": 1, "run.m_cand": 8,
                                  "seeds": [0, 1],
                                  "algorithms": ["random_search", "gisbo"]})
    assert main(["run", "--config", str(cfg_path)]) == 0
    victim = sorted((tmp_path / "gaps").glob("gisbo*.csv"))[0]
    victim.unlink()
    assert main(["rank", str(tmp_path / "gaps")]) == 3
    assert "missing" in capsys.readouterr().err


def test_rank_toy_fixture_matches_stats_oracle(tmp_path):
    from gisbo.core import IterationRecord, RunTrace
    from gisbo.reporting import write_trace_csv
    from gisbo.stats import ResultTable, friedman_test, rank_table
    med = {"a": {"p1": 3.0, "p2": 1.0, "p3": 4.0, "p4": 4.0},
           "b": {"p1": 2.0, "p2": 2.0, "p3": 4.0, "p4": 5.0},
           "c": {"p1": 1.0, "p2": 3.0, "p3": 4.0, "p4": 6.0}}
    out = tmp_path / "toy"
    for alg, cells in med.items():
        for prob, val in cells.items():
            for seed in (0, 1, 2):
                trace = RunTrace(f"{alg}__{prob}__s{seed}", alg, prob, 1, seed)
                trace.append(IterationRecord(1, np.array([0.5]), val, val, 0, 0.0, 0.0))
                write_trace_csv(trace, out / f"{alg}_{prob}_{seed}.csv")
    assert main(["rank", str(out)]) == 0
    report = json.loads((out / "rank_report.json").read_text())
    table = ResultTable(("a", "b", "c"), ("p1", "p2", "p3", "p4"),
                        np.array([[3, 1, 4, 4], [2, 2, 4, 5], [1, 3, 4, 6.0]]), 3)
    np.testing.assert_allclose(report["ranks"], rank_table(table))
    assert report["friedman"]["statistic"] == pytest.approx(
        friedman_test(rank_table(table)).statistic)


def test_plot_command(tmp_path):
    cfg_path, _ = write_config(tmp_path, out_name="plots",
                               **{"problem.dim": 2, "run.n_init": 2,
                                  "run.iters": 2, "run.m_cand": 8,
                                  "seeds": [0, 1],
                                  "algorithms": ["random_search", "gisbo"]})
    assert main(["run", "--config", str(cfg_path)]) == 0
    res = str(tmp_path / "plots")
    assert main(["plot", res, "--mode", "regret_vs_iter"]) == 0
    assert main(["plot", res, "--mode", "regret_vs_time"]) == 0
    assert main(["plot", res, "--mode", "rank_vs_iter"]) == 0
    figs = tmp_path / "plots" / "figures"
    assert (figs / "rank_vs_iter.svg").exists()
    assert any(p.name.startswith("regret_vs_iter") for p in figs.glob("*.svg"))


def test_list_problems_json(capsys):
    assert main(["list-problems", "--dims", "3"]) == 0
    entries = json.loads(capsys.readouterr().out)
    names = {e["name"] for e in entries}
    assert {"ackley", "levy", "rastrigin"} <= names
    assert all(e["dim"] == 3 for e in entries)
    assert "powell" not in names  # powell needs dim >= 4


def test_bridge_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("GISBO_BRIDGE_CMD", "python3 -m gisbo.cli serve-echo")
    cfg = parse_experiment_config({
        "problem.name": "ackley", "problem.dim": 3, "seeds": [0],
        "output_dir": "x", "surrogate": "bridge"})
    assert cfg.bridge_cmd == ("python3", "-m", "gisbo.cli", "serve-echo")
