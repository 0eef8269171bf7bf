"""Console entry points: plot-phase-stack and plot-relative-change."""

from __future__ import annotations

import argparse
import sys

from .figures import ResultsError, plot_phase_stack, plot_relative_change


def phase_stack_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-phase-stack",
        description="Stacked per-phase bars per shard count from a runs CSV",
    )
    parser.add_argument("csv", help="harness runs CSV")
    parser.add_argument("out", help="output image (png/svg)")
    parser.add_argument("--baseline", default=None, help="overlay totals from this CSV")
    args = parser.parse_args(argv)
    try:
        path = plot_phase_stack(args.csv, args.out, baseline_csv=args.baseline)
    except (ResultsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


def relative_change_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-relative-change",
        description="Relative-change curves vs a reference runs CSV",
    )
    parser.add_argument("csv", help="variant runs CSV")
    parser.add_argument("ref_csv", help="reference runs CSV")
    parser.add_argument("out", help="output image (png/svg)")
    parser.add_argument("--metric", default="total_s",
                        choices=["total_s", "deliver_s", "update_s", "communicate_s"])
    args = parser.parse_args(argv)
    try:
        path = plot_relative_change(args.csv, args.ref_csv, args.out, metric=args.metric)
    except (ResultsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0
