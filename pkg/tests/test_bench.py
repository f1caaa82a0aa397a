import csv

import numpy as np
import pytest

from prioritized_replay import SumTree
from prioritized_replay.bench import (
    RAW_COLUMNS,
    SUMMARY_COLUMNS,
    SweepConfig,
    SweepConfigError,
    check_partition_masses,
    check_rank_distribution,
    check_sumtree_distribution,
    check_tree_conservation,
    check_is_unbiasedness,
    expand_runs,
    load_sweep_config,
    run_sweep,
    validate_samplers,
    write_results,
)
from prioritized_replay.cli import main

TINY = dict(
    sizes=(2, 3),
    strategies=("uniform", "greedy_td"),
    representations=("tabular",),
    seeds=(1, 2),
    budget=50_000,
    jobs=1,
)


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


# -- grid expansion -------------------------------------------------------------


def test_grid_cardinality():
    config = SweepConfig(**TINY)
    cells = expand_runs(config)
    assert len(cells) == 2 * 2 * 1 * 2
    assert not any(c.skipped for c in cells)


def test_default_grid_shape():
    cells = expand_runs(SweepConfig())
    assert len(cells) == 8 * 5 * 2 * 10
    skipped = [c for c in cells if c.skipped]
    assert all(c.strategy == "oracle" and c.n > 12 for c in skipped)
    assert len(skipped) == 2 * 2 * 10  # oracle at n = 14, 16 for both representations


def test_oracle_skipped_beyond_the_cap():
    config = SweepConfig(
        sizes=(12, 14), strategies=("oracle",), representations=("tabular",), seeds=(1,), jobs=1
    )
    cells = expand_runs(config)
    assert [c.skipped for c in cells] == [False, True]


def test_config_validation():
    with pytest.raises(SweepConfigError):
        SweepConfig(sizes=(1,))
    with pytest.raises(SweepConfigError):
        SweepConfig(sizes=(18,))
    with pytest.raises(SweepConfigError):
        SweepConfig(strategies=("magic",))
    with pytest.raises(SweepConfigError):
        SweepConfig(seeds=())


# -- config files ---------------------------------------------------------------


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "sweep.cfg"
    path.write_text(
        "# benchmark grid\n"
        "sizes = 2,4\n"
        "strategies = uniform, rank_stochastic\n"
        "seeds = 1,2,3\n"
        "budget = 1000\n"
        "clip_td = off\n"
        "use_is_weights = on\n"
        "eta = 0.25\n"
    )
    config = load_sweep_config(path)
    assert config.sizes == (2, 4)
    assert config.strategies == ("uniform", "rank_stochastic")
    assert config.seeds == (1, 2, 3)
    assert config.budget == 1000
    assert config.clip_td is False and config.use_is_weights is True


def test_config_file_overrides(tmp_path):
    path = tmp_path / "sweep.cfg"
    path.write_text("sizes = 2,4\nbudget = 1000\n")
    config = load_sweep_config(path, {"budget": 77, "jobs": None})
    assert config.budget == 77
    assert config.sizes == (2, 4)


def test_config_file_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("sizes = 2\nnot_a_key = 5\n")
    with pytest.raises(SweepConfigError, match="bad.cfg:2"):
        load_sweep_config(path)
    path.write_text("budget = soon\n")
    with pytest.raises(SweepConfigError, match="bad.cfg:1"):
        load_sweep_config(path)
    path.write_text("just some words\n")
    with pytest.raises(SweepConfigError, match="KEY = VALUE"):
        load_sweep_config(path)


# -- sweeps ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_sweep():
    return run_sweep(SweepConfig(**TINY))


def test_raw_schema_is_stable(tiny_sweep, tmp_path):
    raw_rows, summary_rows = tiny_sweep
    raw_path, summary_path = write_results(raw_rows, summary_rows, tmp_path)
    with open(raw_path, newline="") as handle:
        assert tuple(csv.DictReader(handle).fieldnames) == RAW_COLUMNS
    with open(summary_path, newline="") as handle:
        assert tuple(csv.DictReader(handle).fieldnames) == SUMMARY_COLUMNS


def test_raw_rows_cover_the_grid(tiny_sweep):
    raw_rows, _ = tiny_sweep
    assert len(raw_rows) == 8
    assert all(row["censored"] == "false" for row in raw_rows)
    assert all(int(row["updates"]) > 0 for row in raw_rows)
    assert all(int(row["transitions"]) == 2 ** (int(row["n"]) + 1) - 2 for row in raw_rows)


def test_rerun_is_identical_apart_from_wall_clock(tiny_sweep):
    raw_rows, summary_rows = tiny_sweep
    again_raw, again_summary = run_sweep(SweepConfig(**TINY))
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]
    assert strip(raw_rows) == strip(again_raw)
    assert summary_rows == again_summary


def test_parallel_execution_matches_serial(tiny_sweep):
    raw_rows, _ = tiny_sweep
    parallel_raw, _ = run_sweep(SweepConfig(**{**TINY, "jobs": 2}))
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]
    assert strip(raw_rows) == strip(parallel_raw)


def test_summary_statistics_are_correct(tiny_sweep):
    raw_rows, summary_rows = tiny_sweep
    for summary in summary_rows:
        cell = [
            int(r["updates"])
            for r in raw_rows
            if (r["n"], r["strategy"], r["representation"])
            == (summary["n"], summary["strategy"], summary["representation"])
        ]
        assert float(summary["median"]) == float(np.median(cell))
        assert summary["min"] == min(cell)
        assert summary["max"] == max(cell)
        assert summary["n_censored"] == 0


def test_skipped_oracle_rows_are_marked():
    raw_rows, summary_rows = run_sweep(
        SweepConfig(
            sizes=(13,), strategies=("oracle",), representations=("tabular",), seeds=(1, 2), jobs=1
        )
    )
    assert all(row["censored"] == "skipped" and row["updates"] == "" for row in raw_rows)
    assert summary_rows[0]["median"] == ""


def test_censoring_is_counted():
    raw_rows, summary_rows = run_sweep(
        SweepConfig(
            sizes=(6,), strategies=("uniform",), representations=("tabular",), seeds=(1, 2),
            budget=300, jobs=1,
        )
    )
    assert all(row["censored"] == "true" for row in raw_rows)
    assert summary_rows[0]["n_censored"] == 2
    assert float(summary_rows[0]["median"]) == 300


# -- validation checks -------------------------------------------------------------


def test_quick_validation_suite_passes():
    results = validate_samplers(draws=200_000, seed=1)
    for result in results:
        assert result.passed, result.line()


def test_corrupted_tree_fails_conservation():
    tree = SumTree(64)
    rng = np.random.default_rng(0)
    for i in range(64):
        tree.set_leaf(i, float(rng.uniform(0.1, 2.0)))
    tree.nodes[2] += 0.5  # corrupt an internal node
    result = check_tree_conservation(tree=tree)
    assert not result.passed
    assert "FAIL" in result.line()


def test_individual_checks_report_measured_values():
    check = check_sumtree_distribution(0.6, draws=100_000)
    assert check.passed and 0 <= check.measured < check.threshold
    check = check_rank_distribution(0.6, draws=100_000)
    assert check.passed
    check = check_partition_masses()
    assert check.passed
    check = check_is_unbiasedness(draws=100_000)
    assert check.passed


# -- command line -------------------------------------------------------------------


def test_cli_validate_exits_zero(capsys):
    assert main(["validate", "--draws", "100000"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "checks passed" in out


def test_cli_validate_exit_code_on_failure(monkeypatch, capsys):
    from prioritized_replay import bench

    def broken(*args, **kwargs):
        return [bench.CheckResult("broken", 1.0, 0.5, False)]

    monkeypatch.setattr("prioritized_replay.cli.validate_samplers", broken)
    assert main(["validate"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_cli_usage_errors_exit_one(tmp_path, capsys):
    assert main(["sweep", "--sizes", "2", "--budget", "not-a-number"]) == 1
    missing = tmp_path / "nope.cfg"
    assert main(["sweep", str(missing)]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("mystery = 4\n")
    assert main(["sweep", str(bad)]) == 1
    assert main(["not-a-command"]) == 1


def test_cli_sweep_writes_files(tmp_path, capsys):
    code = main(
        [
            "sweep",
            "--sizes", "2",
            "--strategies", "uniform",
            "--representations", "tabular",
            "--seeds", "2",
            "--budget", "50000",
            "--jobs", "1",
            "--out-dir", str(tmp_path),
        ]
    )
    assert code == 0
    raw = read_rows(tmp_path / "runs.csv")
    assert len(raw) == 2 and {r["seed"] for r in raw} == {"1", "2"}
    assert (tmp_path / "summary.csv").exists()


def test_cli_out_dir_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("REPLAY_BENCH_OUT_DIR", str(tmp_path / "from_env"))
    code = main(
        [
            "sweep",
            "--sizes", "2",
            "--strategies", "uniform",
            "--representations", "tabular",
            "--seeds", "1",
            "--budget", "50000",
            "--jobs", "1",
        ]
    )
    assert code == 0
    assert (tmp_path / "from_env" / "runs.csv").exists()
