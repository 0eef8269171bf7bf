"""Figure rendering for finished benchmark CSVs.

Reads only the runs CSV emitted by the benchmark harness; there is no
coupling to the simulator process. Data series are computed by pure
functions of the parsed rows so identical CSV bytes always produce
identical series; rendering is a thin matplotlib layer on top.
"""

from __future__ import annotations

import csv
import warnings
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

PHASE_COLUMNS = ("update_s", "communicate_s", "deliver_s")
REQUIRED_COLUMNS = ("variant", "shards", "total_s") + PHASE_COLUMNS

PHASE_COLORS = {
    "deliver_s": "#c23b22",      # spike delivery
    "communicate_s": "#e6b422",  # spike exchange
    "update_s": "#3c8031",       # neuron update
}


class ResultsError(ValueError):
    """The CSV does not satisfy the harness results schema."""


def load_results(path) -> list[dict]:
    """Parse a harness runs CSV into typed rows.

    The phase and key columns are mandatory; unknown columns are kept
    but trigger a warning. An empty table is an error.
    """
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ResultsError(f"{path}: no header row")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ResultsError(f"{path}: missing required columns {missing}")
        known = set(REQUIRED_COLUMNS) | {
            "brb", "bts", "lag", "threads", "neurons_per_shard", "seed", "rep",
            "spikes", "rate_hz", "cpi",
        }
        unknown = [c for c in reader.fieldnames if c not in known]
        if unknown:
            warnings.warn(f"{path}: ignoring unknown columns {unknown}", stacklevel=2)
        rows = []
        for raw in reader:
            row = dict(raw)
            row["shards"] = int(raw["shards"])
            for column in PHASE_COLUMNS + ("total_s",):
                row[column] = float(raw[column])
            rows.append(row)
    if not rows:
        raise ResultsError(f"{path}: table is empty")
    return rows


def phase_stack_series(rows: list[dict]) -> tuple[list[int], dict[str, list[float]]]:
    """Mean seconds per phase per shard count, x-axis ordered ascending."""
    grouped: dict[int, list[dict]] = defaultdict(list)
    for row in rows:
        grouped[row["shards"]].append(row)
    shard_counts = sorted(grouped)
    series = {phase: [] for phase in PHASE_COLUMNS}
    series["total_s"] = []
    for m in shard_counts:
        bucket = grouped[m]
        for phase in PHASE_COLUMNS + ("total_s",):
            series[phase].append(float(np.mean([r[phase] for r in bucket])))
    return shard_counts, series


def plot_phase_stack(csv_path, out_path, baseline_csv=None) -> Path:
    """Stacked per-phase bars per shard count, optional baseline overlay."""
    rows = load_results(csv_path)
    shard_counts, series = phase_stack_series(rows)
    x = np.arange(len(shard_counts))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    bottom = np.zeros(len(shard_counts))
    for phase in ("update_s", "communicate_s", "deliver_s"):
        values = np.asarray(series[phase])
        ax.bar(x, values, bottom=bottom, width=0.6,
               color=PHASE_COLORS[phase], label=phase.removesuffix("_s"))
        bottom += values
    ax.bar(x, series["total_s"], width=0.6, fill=False,
           edgecolor="black", linewidth=1.0, label="total")
    if baseline_csv is not None:
        base_counts, base_series = phase_stack_series(load_results(baseline_csv))
        positions = [shard_counts.index(m) for m in base_counts if m in shard_counts]
        totals = [t for m, t in zip(base_counts, base_series["total_s"])
                  if m in shard_counts]
        ax.bar(positions, totals, width=0.6, fill=False, edgecolor="black",
               linestyle="--", linewidth=1.0, label="baseline total")
    ax.set_xticks(x, [str(m) for m in shard_counts])
    ax.set_xlabel("shards")
    ax.set_ylabel("wall-clock time (s)")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def relative_change_series(
    variant_rows: list[dict], ref_rows: list[dict], metric: str = "total_s"
) -> dict[str, tuple[list[int], list[float], list[float]]]:
    """Per variant: shard counts, mean change in percent, sd error bars.

    Change per point is (t_variant - t_ref) / t_ref * 100 against the
    reference mean of the same shard count; the error bar is the sd of
    the variant's repetitions scaled by the same reference mean.
    """
    ref_by_point: dict[int, list[float]] = defaultdict(list)
    for row in ref_rows:
        ref_by_point[row["shards"]].append(row[metric])
    grouped: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in variant_rows:
        grouped[row["variant"]][row["shards"]].append(row[metric])

    series = {}
    for variant, points in grouped.items():
        missing = sorted(set(points) - set(ref_by_point))
        if missing:
            raise ResultsError(
                f"variant {variant!r}: no reference data for shard counts {missing}"
            )
        shard_counts = sorted(points)
        pct, err = [], []
        for m in shard_counts:
            ref_mean = float(np.mean(ref_by_point[m]))
            values = points[m]
            mean = float(np.mean(values))
            sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
            pct.append((mean - ref_mean) / ref_mean * 100.0)
            err.append(sd / ref_mean * 100.0)
        series[variant] = (shard_counts, pct, err)
    return series


def relative_change_from_files(
    variant_csv, ref_csv, metric: str = "total_s"
) -> dict[str, tuple[list[int], list[float], list[float]]]:
    """File-level comparison: reference rows come from the rows labeled
    ``ref`` in the reference CSV, or from the whole file when it holds a
    single non-ref series (so a file compared against itself is flat
    zero)."""
    variant_rows = load_results(variant_csv)
    ref_rows = [r for r in load_results(ref_csv) if r["variant"] == "ref"]
    if not ref_rows:
        ref_rows = load_results(ref_csv)
    curves = [r for r in variant_rows if r["variant"] != "ref"] or variant_rows
    return relative_change_series(curves, ref_rows, metric)


def plot_relative_change(variant_csv, ref_csv, out_path, metric: str = "total_s") -> Path:
    """Relative-change curves with error bars and a dotted zero line."""
    series = relative_change_from_files(variant_csv, ref_csv, metric)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.axhline(0.0, color="#7b1113", linestyle=":", linewidth=1.2)
    for variant, (shard_counts, pct, err) in sorted(series.items()):
        ax.errorbar(shard_counts, pct, yerr=err, marker="o", capsize=3, label=variant)
    ax.set_xscale("log", base=2)
    ax.set_xticks(sorted({m for s in series.values() for m in s[0]}))
    ax.get_xaxis().set_major_formatter(plt.ScalarFormatter())
    ax.set_xlabel("shards")
    ax.set_ylabel(f"change in {metric.removesuffix('_s')} time (%)")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)
