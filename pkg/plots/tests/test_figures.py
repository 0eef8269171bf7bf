"""Figure data series and rendering against the harness CSV contract."""

import csv
import subprocess
import sys
from pathlib import Path

import pytest

from spikeplots import (
    ResultsError,
    load_results,
    phase_stack_series,
    plot_phase_stack,
    plot_relative_change,
    relative_change_from_files,
    relative_change_series,
)
from spikeplots.cli import phase_stack_main, relative_change_main

RUNS_HEADER = (
    "variant,brb,bts,lag,shards,threads,neurons_per_shard,seed,rep,"
    "update_s,communicate_s,deliver_s,total_s,spikes,rate_hz,cpi"
)
RESULTS_DIR = Path(__file__).resolve().parents[2] / "results"


def write_runs_csv(path, rows):
    """rows: (variant, shards, rep, update, communicate, deliver, total)"""
    with open(path, "w", newline="") as f:
        f.write(RUNS_HEADER + "\n")
        writer = csv.writer(f)
        for variant, shards, rep, up, comm, del_, total in rows:
            writer.writerow([
                variant, 16, 16, 16, shards, 2, 100, 1, rep,
                repr(up), repr(comm), repr(del_), repr(total), 10, 5.0, "",
            ])
    return path


@pytest.fixture
def simple_csv(tmp_path):
    rows = []
    for shards in (1, 2, 4):
        for rep in range(3):
            base = 0.1 * shards + 0.001 * rep
            rows.append(("ref", shards, rep, base, base / 2, base * 2, base * 3.6))
            rows.append(("bwts", shards, rep, base, base / 2, base, base * 2.6))
    return write_runs_csv(tmp_path / "runs.csv", rows)


@pytest.fixture
def acceptance_sweep_csv(tmp_path):
    """The primary benchmark's sweep CSV, regenerated via its CLI if absent."""
    existing = RESULTS_DIR / "acceptance_sweep_runs.csv"
    if existing.exists():
        return existing
    out = tmp_path / "sweep"
    subprocess.run(
        [sys.executable, "-m", "spikebench", "sweep",
         "--shard-counts", "1,2", "--variants", "bwts",
         "--neurons-per-shard", "60", "--threads", "1", "--bio-time", "0.006",
         "--reps", "2", "--indegree-exc", "10", "--indegree-inh", "2",
         "--out", str(out)],
        check=True,
    )
    return Path(f"{out}_runs.csv")


class TestLoad:
    def test_missing_phase_column_is_hard_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("variant,shards,total_s\nref,1,0.5\n")
        with pytest.raises(ResultsError, match="missing required columns"):
            load_results(path)

    def test_empty_table_is_error(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(RUNS_HEADER + "\n")
        with pytest.raises(ResultsError, match="empty"):
            load_results(path)

    def test_unknown_columns_ignored_with_warning(self, tmp_path):
        path = tmp_path / "extra.csv"
        path.write_text(
            RUNS_HEADER + ",bogus\n"
            + "ref,16,16,16,1,2,100,1,0,0.1,0.05,0.2,0.36,10,5.0,,42\n"
        )
        with pytest.warns(UserWarning, match="bogus"):
            rows = load_results(path)
        assert rows[0]["shards"] == 1


class TestPhaseStack:
    def test_single_row_single_bar(self, tmp_path):
        path = write_runs_csv(tmp_path / "one.csv", [("ref", 2, 0, 0.1, 0.05, 0.2, 0.36)])
        shard_counts, series = phase_stack_series(load_results(path))
        assert shard_counts == [2]
        assert series["deliver_s"] == [0.2]
        out = plot_phase_stack(path, tmp_path / "one.png")
        assert out.exists() and out.stat().st_size > 0

    def test_x_axis_ordered_by_shards(self, simple_csv):
        shard_counts, _ = phase_stack_series(load_results(simple_csv))
        assert shard_counts == sorted(shard_counts) == [1, 2, 4]

    def test_renders_acceptance_sweep(self, acceptance_sweep_csv, tmp_path):
        out = plot_phase_stack(acceptance_sweep_csv, tmp_path / "stack.png")
        assert out.exists() and out.stat().st_size > 0

    def test_baseline_overlay(self, simple_csv, tmp_path):
        out = plot_phase_stack(simple_csv, tmp_path / "overlay.png",
                               baseline_csv=simple_csv)
        assert out.exists()

    def test_cli_error_exit_on_empty(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text(RUNS_HEADER + "\n")
        code = phase_stack_main([str(empty), str(tmp_path / "x.png")])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestRelativeChange:
    def test_identical_csvs_flat_zero(self, tmp_path):
        path = write_runs_csv(
            tmp_path / "only.csv",
            [("bwts", m, r, 0.1, 0.05, 0.2, 0.35) for m in (1, 2, 4) for r in range(3)],
        )
        series = relative_change_from_files(path, path)
        (shard_counts, pct, err) = series["bwts"]
        assert shard_counts == [1, 2, 4]
        assert all(p == 0.0 for p in pct)
        out = plot_relative_change(path, path, tmp_path / "zero.png")
        assert out.exists()

    def test_uniformly_twice_as_fast_is_minus_fifty(self, tmp_path):
        ref = write_runs_csv(
            tmp_path / "ref.csv",
            [("ref", m, r, 0.1, 0.1, 0.4, 0.6) for m in (1, 2) for r in range(2)],
        )
        fast = write_runs_csv(
            tmp_path / "fast.csv",
            [("quick", m, r, 0.05, 0.05, 0.2, 0.3) for m in (1, 2) for r in range(2)],
        )
        series = relative_change_series(load_results(fast), load_results(ref))
        shard_counts, pct, err = series["quick"]
        assert shard_counts == [1, 2]
        assert pct == [-50.0, -50.0]
        assert err == [0.0, 0.0]

    def test_mismatched_points_error_lists_missing_keys(self, tmp_path):
        ref = write_runs_csv(tmp_path / "ref.csv", [("ref", 1, 0, 0.1, 0.1, 0.4, 0.6)])
        var = write_runs_csv(
            tmp_path / "var.csv",
            [("v", 1, 0, 0.1, 0.1, 0.3, 0.5), ("v", 8, 0, 0.1, 0.1, 0.3, 0.5)],
        )
        with pytest.raises(ResultsError, match=r"\[8\]"):
            relative_change_series(load_results(var), load_results(ref))

    def test_matches_harness_summary_within_1e9(self, acceptance_sweep_csv):
        summary_path = Path(str(acceptance_sweep_csv).replace("_runs.csv", "_summary.csv"))
        if not summary_path.exists():
            pytest.skip("no summary CSV next to the runs CSV")
        rows = load_results(acceptance_sweep_csv)
        ref_rows = [r for r in rows if r["variant"] == "ref"]
        series = relative_change_series(
            [r for r in rows if r["variant"] != "ref"], ref_rows
        )
        with open(summary_path) as f:
            summary = {
                (r["variant"], int(r["shards"])): r
                for r in csv.DictReader(f)
                if r["variant"] != "ref" and not r["error"]
            }
        checked = 0
        for variant, (shard_counts, pct, _err) in series.items():
            for m, p in zip(shard_counts, pct):
                row = summary.get((variant, m))
                if row and row["rel_change_total"]:
                    assert abs(p - float(row["rel_change_total"]) * 100.0) < 1e-9 * 100.0
                    checked += 1
        assert checked > 0

    def test_cli_round_trip(self, simple_csv, tmp_path):
        code = relative_change_main(
            [str(simple_csv), str(simple_csv), str(tmp_path / "rc.png"),
             "--metric", "deliver_s"]
        )
        assert code == 0
        assert (tmp_path / "rc.png").exists()


class TestPurity:
    def test_same_bytes_same_series(self, simple_csv, tmp_path):
        clone = tmp_path / "clone.csv"
        clone.write_bytes(Path(simple_csv).read_bytes())
        a = phase_stack_series(load_results(simple_csv))
        b = phase_stack_series(load_results(clone))
        assert a == b
        ra = relative_change_series(load_results(simple_csv), load_results(simple_csv))
        rb = relative_change_series(load_results(clone), load_results(clone))
        assert ra == rb
