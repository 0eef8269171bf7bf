"""Command line entry points.

``spikebench run`` executes one configuration for a number of
repetitions and writes the runs CSV plus a JSON mirror. ``spikebench
sweep`` performs a weak-scaling sweep over shard counts for one or more
delivery variants, adding the per-point summary CSV with relative
changes against the reference strategy.

Flags can be preloaded from a flat ``key = value`` config file via
``--config``; explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .delivery import TOKEN_TO_VARIANT, DeliveryStrategy
from .dynamics import NeuronParams
from .harness import (
    SimConfig,
    Simulation,
    load_config_file,
    weak_scaling_sweep,
    write_runs_csv,
    write_runs_json,
)
from .exchange import write_spike_trace
from .network import NetworkConfig

VARIANT_TOKENS = sorted(TOKEN_TO_VARIANT)

_BOOLEANS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--variant", choices=VARIANT_TOKENS, default="ref")
    p.add_argument("--brb", type=int, default=16, help="ring-buffer batch size")
    p.add_argument("--bts", type=int, default=16, help="target-segment batch size")
    p.add_argument("--lag", type=int, default=16, help="pipelining lag")
    p.add_argument("--shards", type=int, default=2, help="emulated processes M")
    p.add_argument("--threads", type=int, default=2, help="threads per shard T")
    p.add_argument("--neurons-per-shard", type=int, default=250)
    p.add_argument("--h", type=float, default=0.1, help="grid step in ms")
    p.add_argument("--delay", type=float, default=1.5, help="synaptic delay in ms")
    p.add_argument("--bio-time", type=float, default=1.0, help="biological time in s")
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--out", default=None, help="output path prefix")
    p.add_argument("--trace", action="store_true", help="record the spike trace CSV")
    p.add_argument("--counters", action="store_true",
                   help="instrumentation counters and CPI hook (untimed runs only)")
    p.add_argument("--indegree-exc", type=int, default=40)
    p.add_argument("--indegree-inh", type=int, default=10)
    p.add_argument("--weight-exc", type=float, default=87.8)
    p.add_argument("--g", type=float, default=5.0, dest="inhibition_ratio",
                   help="inhibitory/excitatory weight ratio")
    p.add_argument("--synapse-types", type=int, default=1)
    p.add_argument("--external-current", type=float, default=570.0, help="DC drive in pA")
    p.add_argument("--exact-weights", action="store_true",
                   help="draw weights from the exact-arithmetic scheme")


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    # Pull --config out first so file values become parser defaults.
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if known.config:
        raw = load_config_file(known.config)
        defaults = {}
        for key, value in raw.items():
            dest = key.replace("-", "_")
            if value.lower() in _BOOLEANS:
                defaults[dest] = _BOOLEANS[value.lower()]
            else:
                defaults[dest] = value
        parser.set_defaults(**defaults)
    return argv


def _build_sim_config(args) -> SimConfig:
    network = NetworkConfig(
        shards=int(args.shards),
        threads_per_shard=int(args.threads),
        neurons_per_shard=int(args.neurons_per_shard),
        indegree_exc=int(args.indegree_exc),
        indegree_inh=int(args.indegree_inh),
        weight_exc=float(args.weight_exc),
        inhibition_ratio=float(args.inhibition_ratio),
        delay_ms=float(args.delay),
        synapse_types=int(args.synapse_types),
        seed=int(args.seed),
    )
    strategy = DeliveryStrategy.from_token(
        args.variant, batch_rb=int(args.brb), batch_ts=int(args.bts), lag=int(args.lag)
    )
    neuron = NeuronParams(external_current=float(args.external_current))
    return SimConfig(
        network=network,
        neuron=neuron,
        h=float(args.h),
        biological_time=float(args.bio_time),
        strategy=strategy,
        repetitions=int(args.reps),
        output_path=args.out,
        counters=bool(args.counters),
        exact_weights=bool(args.exact_weights),
    )


def _cmd_run(args) -> int:
    cfg = _build_sim_config(args)
    sim = Simulation(cfg)
    records = []
    for rep in range(cfg.repetitions):
        record = sim.run(rep=rep, record_trace=bool(args.trace))
        records.append(record)
        cpi = "" if record.cpi is None else f" cpi={record.cpi:.3f}"
        print(
            f"{record.variant} rep {rep}: update={record.update_s:.4f}s "
            f"communicate={record.communicate_s:.4f}s deliver={record.deliver_s:.4f}s "
            f"total={record.total_s:.4f}s spikes={record.spikes} "
            f"rate={record.rate_hz:.2f}/s{cpi}"
        )
    if args.out:
        write_runs_csv(f"{args.out}_runs.csv", records)
        write_runs_json(f"{args.out}_runs.json", records)
        if args.trace and sim.last_trace_rows is not None:
            write_spike_trace(f"{args.out}_trace.csv", sim.last_trace_rows)
        print(f"wrote {args.out}_runs.csv")
    if not all(r.self_checks_passed for r in records):
        failing = {
            name
            for r in records
            for name, ok in r.self_checks.items()
            if not ok
        }
        print(f"self-checks failed: {sorted(failing)}", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    cfg = _build_sim_config(args)
    shard_counts = [int(x) for x in args.shard_counts.split(",")]
    variants = [
        DeliveryStrategy.from_token(
            token, batch_rb=int(args.brb), batch_ts=int(args.bts), lag=int(args.lag)
        )
        for token in args.variants.split(",")
    ]
    records, summary = weak_scaling_sweep(cfg, shard_counts, variants, out_prefix=args.out)
    for row in summary:
        if row["error"]:
            print(f"{row['variant']} M={row['shards']}: ERROR {row['error']}")
        else:
            print(
                f"{row['variant']} M={row['shards']}: deliver={row['deliver_mean_s']}s"
                f" (sd {row['deliver_sd_s']}) rel_total={row['rel_change_total'] or '0.0'}"
            )
    if args.out:
        print(f"wrote {args.out}_runs.csv, {args.out}_summary.csv")
    if not all(r.self_checks_passed for r in records):
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = argparse.ArgumentParser(
        prog="spikebench",
        description="Spiking-network spike-delivery kernel benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one configuration")
    _add_common_flags(p_run)
    p_run.set_defaults(func=_cmd_run)
    p_sweep = sub.add_parser("sweep", help="weak-scaling sweep over shard counts")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--shard-counts", default="1,2,4", help="comma list, ascending")
    p_sweep.add_argument("--variants", default="bwtsrb-pf", help="comma list of variants")
    p_sweep.set_defaults(func=_cmd_sweep)

    _apply_config_file(p_run, argv)
    _apply_config_file(p_sweep, argv)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
