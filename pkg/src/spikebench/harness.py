"""Simulation driver, phase stopwatches, weak-scaling sweeps, result emission.

A run executes the update / communicate / deliver cycle once per
exchange interval. Update advances every neuron by ``interval_steps``
grid steps, communicate expands and exchanges the interval's spikes
between the emulated shards, deliver sorts the receive buffers into the
spike-receive registers (one synchronization point) and routes every
entry through its target segment.

All shard and thread parallelism is emulated sequentially while
preserving the ownership discipline (one worker per pool, write
exclusive register partitions) and the phase barriers, so dynamics are
bit-reproducible for a fixed seed. Timings are taken with a monotonic
clock at the phase boundaries; communication cost is the wall clock of
the in-memory exchange and is labeled accordingly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .delivery import DeliveryCounters, DeliveryStrategy, make_kernel
from .dynamics import NeuronParams, NeuronPool, propagator_init, ring_buffer_length
from .exchange import collect_spikes, exchange, sort_into_register
from .network import ConfigError, NetworkBuild, NetworkConfig, build_network
from .oracle import exact_weight_sampler

RUNS_CSV_COLUMNS = [
    "variant", "brb", "bts", "lag", "shards", "threads", "neurons_per_shard",
    "seed", "rep", "update_s", "communicate_s", "deliver_s", "total_s",
    "spikes", "rate_hz", "cpi",
]
RUNS_CSV_HEADER = ",".join(RUNS_CSV_COLUMNS)

SUMMARY_CSV_COLUMNS = [
    "variant", "brb", "bts", "lag", "shards", "threads", "neurons_per_shard",
    "reps", "update_mean_s", "update_sd_s", "communicate_mean_s",
    "communicate_sd_s", "deliver_mean_s", "deliver_sd_s", "total_mean_s",
    "total_sd_s", "rel_change_total", "rel_change_deliver", "error",
]
SUMMARY_CSV_HEADER = ",".join(SUMMARY_CSV_COLUMNS)

TIMER_EPSILON = 1e-6  # seconds of slack for phase sum vs total


class StopwatchError(RuntimeError):
    """Stopwatch misuse (stop before start, double start)."""


class Stopwatch:
    """Accumulating wall-clock timer on the monotonic perf counter.

    Resolution is that of ``time.perf_counter`` (nanoseconds on Linux).
    """

    def __init__(self):
        self._started_at: float | None = None
        self.elapsed = 0.0

    def start(self) -> None:
        if self._started_at is not None:
            raise StopwatchError("stopwatch already running")
        self._started_at = time.perf_counter()

    def stop(self) -> float:
        if self._started_at is None:
            raise StopwatchError("stop before start")
        self.elapsed += time.perf_counter() - self._started_at
        self._started_at = None
        return self.elapsed

    def read(self) -> float:
        running = 0.0
        if self._started_at is not None:
            running = time.perf_counter() - self._started_at
        return self.elapsed + running

    def reset(self) -> None:
        self._started_at = None
        self.elapsed = 0.0


@dataclass
class PhaseTimings:
    """Per-interval and aggregated wall-clock cost of the three phases."""

    update_s: list[float] = field(default_factory=list)
    communicate_s: list[float] = field(default_factory=list)
    deliver_s: list[float] = field(default_factory=list)
    total_s: float = 0.0

    @property
    def update_total(self) -> float:
        return sum(self.update_s)

    @property
    def communicate_total(self) -> float:
        return sum(self.communicate_s)

    @property
    def deliver_total(self) -> float:
        return sum(self.deliver_s)

    def consistent(self, epsilon: float = TIMER_EPSILON) -> bool:
        phases = self.update_total + self.communicate_total + self.deliver_total
        nonneg = all(
            t >= 0.0
            for series in (self.update_s, self.communicate_s, self.deliver_s)
            for t in series
        )
        return nonneg and self.total_s >= phases - epsilon


@dataclass
class SimConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    neuron: NeuronParams = field(default_factory=lambda: NeuronParams(external_current=570.0))
    h: float = 0.1                      # ms
    biological_time: float = 1.0        # s
    strategy: DeliveryStrategy = field(default_factory=DeliveryStrategy)
    repetitions: int = 3
    output_path: str | None = None
    record_spikes: bool = False
    counters: bool = False
    exact_weights: bool = False

    @property
    def delay_ms(self) -> float:
        return self.network.delay_ms

    @property
    def interval_steps(self) -> int:
        return self.network.delay_steps(self.h)

    @property
    def n_intervals(self) -> int:
        # Partial trailing intervals are rounded up to a full exchange
        # interval, so effective biological time is n_intervals * delay.
        if self.biological_time <= 0.0:
            return 0
        return int(math.ceil(self.biological_time * 1000.0 / self.network.delay_ms - 1e-9))

    def validate(self) -> None:
        if self.h <= 0.0:
            raise ConfigError("h must be positive")
        if self.biological_time < 0.0:
            raise ConfigError("biological_time must be >= 0")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        self.network.validate(self.h)
        self.neuron.validate()
        self.strategy.validate()


@dataclass
class RunRecord:
    """One run's schema-stable result row plus context."""

    variant: str
    brb: int
    bts: int
    lag: int
    shards: int
    threads: int
    neurons_per_shard: int
    seed: int
    rep: int
    update_s: float
    communicate_s: float
    deliver_s: float
    total_s: float
    spikes: int
    rate_hz: float
    cpi: float | None
    train_hash: str
    n_intervals: int
    self_checks: dict[str, bool]
    host: dict[str, str]
    config_echo: dict
    timings: PhaseTimings
    counters: DeliveryCounters | None = None

    @property
    def self_checks_passed(self) -> bool:
        return all(self.self_checks.values())

    def csv_row(self) -> list[str]:
        return [
            self.variant, str(self.brb), str(self.bts), str(self.lag),
            str(self.shards), str(self.threads), str(self.neurons_per_shard),
            str(self.seed), str(self.rep),
            repr(self.update_s), repr(self.communicate_s),
            repr(self.deliver_s), repr(self.total_s),
            str(self.spikes), repr(self.rate_hz),
            "" if self.cpi is None else repr(self.cpi),
        ]

    def json_dict(self) -> dict:
        return {
            "variant": self.variant, "brb": self.brb, "bts": self.bts,
            "lag": self.lag, "shards": self.shards, "threads": self.threads,
            "neurons_per_shard": self.neurons_per_shard, "seed": self.seed,
            "rep": self.rep, "update_s": self.update_s,
            "communicate_s": self.communicate_s, "deliver_s": self.deliver_s,
            "total_s": self.total_s, "spikes": self.spikes,
            "rate_hz": self.rate_hz, "cpi": self.cpi,
            "train_hash": self.train_hash, "n_intervals": self.n_intervals,
            "self_checks": self.self_checks, "host": self.host,
            "config": self.config_echo,
        }


def host_metadata() -> dict[str, str]:
    return {
        "hostname": platform.node(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


class Simulation:
    """A constructed network instance plus everything needed to run it.

    Construction (the expensive part) happens once; :meth:`run` resets
    the dynamic state, so repetitions and determinism checks reuse the
    same instance. ``prebuilt`` shares a network between strategy
    configurations at the same point.
    """

    def __init__(self, cfg: SimConfig, prebuilt: NetworkBuild | None = None):
        cfg.validate()
        self.cfg = cfg
        if prebuilt is not None:
            if prebuilt.cfg != cfg.network or prebuilt.h != cfg.h:
                raise ConfigError("prebuilt network does not match this config")
            self.build = prebuilt
        else:
            stream = None
            if cfg.exact_weights:
                stream = exact_weight_sampler([cfg.network.seed, 41])
            self.build = build_network(cfg.network, cfg.h, stream)
        self.prop = propagator_init(cfg.neuron, cfg.h)
        self.interval_steps = cfg.interval_steps
        self.ring_len = ring_buffer_length(self.build.delay_steps, self.interval_steps)
        self.kernel = make_kernel(cfg.strategy)
        self.pools = [
            NeuronPool(cfg.neuron, self.prop, self.build.local_to_gid[s], self.ring_len)
            for s in range(cfg.network.shards)
        ]
        self.last_trace_rows: list[tuple] | None = None
        self.last_counters: DeliveryCounters | None = None

    def reset_state(self) -> None:
        p = self.cfg.neuron
        for s, pool in enumerate(self.pools):
            rng = np.random.default_rng([self.cfg.network.seed, 1, s])
            init_v = rng.uniform(p.reset_potential, p.threshold, size=pool.n)
            pool.reset_state(init_v)

    def ring_buffer_image(self) -> np.ndarray:
        """Snapshot of all ring buffers, rows ordered by global neuron id."""
        n = self.cfg.network.n_neurons
        image = np.zeros((n, self.ring_len), dtype=np.float64)
        for s, pool in enumerate(self.pools):
            image[pool.local_to_gid] = pool.rb
        return image

    def run(self, rep: int = 0, record_trace: bool = False,
            counters: DeliveryCounters | None = None) -> RunRecord:
        cfg = self.cfg
        net = cfg.network
        m, t, n_types = net.shards, net.threads_per_shard, net.synapse_types
        routing = self.build.routing
        interval_steps = self.interval_steps
        n_intervals = cfg.n_intervals
        record_trace = record_trace or cfg.record_spikes
        if counters is None and cfg.counters:
            counters = DeliveryCounters()

        cpi_counter = None
        if cfg.counters:
            from .perfhook import CyclesInstructionsCounter
            cpi_counter = CyclesInstructionsCounter()
            if not cpi_counter.available:
                cpi_counter = None

        self.reset_state()
        sw_total = Stopwatch()
        timings = PhaseTimings()
        train_steps: list[np.ndarray] = []
        train_gids: list[np.ndarray] = []
        trace_rows: list[tuple] = []
        checks = {
            "spike_conservation": True,
            "register_conservation": True,
            "timer_consistency": True,
        }
        total_spikes = 0

        sw_total.start()
        for interval in range(n_intervals):
            start_step = interval * interval_steps

            sw = Stopwatch()
            sw.start()
            spikes_by_shard: list[list[tuple[int, int]]] = [[] for _ in range(m)]
            for lag in range(interval_steps):
                step = start_step + lag
                for s, pool in enumerate(self.pools):
                    fired = pool.advance(step)
                    if fired.size:
                        gids = pool.local_to_gid[fired]
                        spikes_by_shard[s].extend(
                            (int(g), lag) for g in gids
                        )
                        train_steps.append(np.full(gids.shape, step, dtype=np.int64))
                        train_gids.append(gids)
            timings.update_s.append(sw.stop())

            sw = Stopwatch()
            sw.start()
            send_lists = [collect_spikes(spikes_by_shard[s], routing, m) for s in range(m)]
            receive = exchange(send_lists)
            timings.communicate_s.append(sw.stop())

            sw = Stopwatch()
            sw.start()
            registers = [sort_into_register(receive[s], t, n_types) for s in range(m)]
            if counters is not None:
                # Single synchronization point between register fill and delivery.
                counters.record_barrier(interval)
            if cpi_counter is not None:
                cpi_counter.start()
            for s in range(m):
                store = self.build.stores[s]
                rb = self.pools[s].rb
                for thread in range(t):
                    for type_id in range(n_types):
                        entries = registers[s][thread][type_id]
                        if not entries:
                            continue
                        block = store.block(thread, type_id)
                        if counters is not None:
                            counters.enter_block((s, thread, type_id), len(block))
                        self.kernel(entries, block, rb, self.ring_len, start_step, counters)
            if cpi_counter is not None:
                cpi_counter.stop()
            timings.deliver_s.append(sw.stop())

            # Cheap per-interval conservation self-checks.
            n_spikes = sum(len(sp) for sp in spikes_by_shard)
            expected_entries = sum(
                routing.fanout(g) for sp in spikes_by_shard for g, _ in sp
            )
            received = sum(len(buf) for buf in receive)
            registered = sum(
                len(registers[s][th][c])
                for s in range(m) for th in range(t) for c in range(n_types)
            )
            if received != expected_entries:
                checks["spike_conservation"] = False
            if registered != received:
                checks["register_conservation"] = False
            total_spikes += n_spikes

            if record_trace:
                for s in range(m):
                    for gid, lag in spikes_by_shard[s]:
                        for shard, thread, type_id, lcid in routing.routes(gid):
                            trace_rows.append(
                                (interval, gid, lag, shard, thread, type_id, lcid)
                            )
        timings.total_s = sw_total.stop()
        checks["timer_consistency"] = timings.consistent()

        steps_arr = (
            np.concatenate(train_steps) if train_steps else np.empty(0, dtype=np.int64)
        )
        gids_arr = (
            np.concatenate(train_gids) if train_gids else np.empty(0, dtype=np.int64)
        )
        train_hash = hashlib.sha256(
            steps_arr.tobytes() + b"|" + gids_arr.tobytes()
        ).hexdigest()
        self.last_trace_rows = trace_rows if record_trace else None
        self.last_counters = counters
        self.train = (steps_arr, gids_arr)

        n = net.n_neurons
        effective_bio_s = n_intervals * net.delay_ms / 1000.0
        rate = total_spikes / (n * effective_bio_s) if n and effective_bio_s else 0.0
        cpi = cpi_counter.cpi() if cpi_counter is not None else None
        return RunRecord(
            variant=cfg.strategy.token,
            brb=cfg.strategy.batch_rb,
            bts=cfg.strategy.batch_ts,
            lag=cfg.strategy.lag,
            shards=m,
            threads=t,
            neurons_per_shard=net.neurons_per_shard,
            seed=net.seed,
            rep=rep,
            update_s=timings.update_total,
            communicate_s=timings.communicate_total,
            deliver_s=timings.deliver_total,
            total_s=timings.total_s,
            spikes=total_spikes,
            rate_hz=rate,
            cpi=cpi,
            train_hash=train_hash,
            n_intervals=n_intervals,
            self_checks=checks,
            host=host_metadata(),
            config_echo=config_echo(cfg),
            timings=timings,
            counters=counters,
        )


def config_echo(cfg: SimConfig) -> dict:
    net = cfg.network
    return {
        "shards": net.shards,
        "threads_per_shard": net.threads_per_shard,
        "neurons_per_shard": net.neurons_per_shard,
        "excitatory_fraction": net.excitatory_fraction,
        "indegree_exc": net.indegree_exc,
        "indegree_inh": net.indegree_inh,
        "weight_exc": net.weight_exc,
        "inhibition_ratio": net.inhibition_ratio,
        "delay_ms": net.delay_ms,
        "synapse_types": net.synapse_types,
        "seed": net.seed,
        "h": cfg.h,
        "biological_time": cfg.biological_time,
        "strategy": cfg.strategy.token,
        "batch_rb": cfg.strategy.batch_rb,
        "batch_ts": cfg.strategy.batch_ts,
        "lag": cfg.strategy.lag,
        "exact_weights": cfg.exact_weights,
        "external_current": cfg.neuron.external_current,
    }


def run_simulation(cfg: SimConfig, record_trace: bool = False,
                   counters: DeliveryCounters | None = None) -> RunRecord:
    """Build and run one simulation; see :class:`Simulation` for reuse."""
    return Simulation(cfg).run(record_trace=record_trace, counters=counters)


def write_runs_csv(path, records: list[RunRecord]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RUNS_CSV_COLUMNS)
        for record in records:
            writer.writerow(record.csv_row())


def write_runs_json(path, records: list[RunRecord]) -> None:
    with open(path, "w") as f:
        json.dump([r.json_dict() for r in records], f, indent=2)


def _mean_sd(values: list[float]) -> tuple[float, float]:
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, sd


def summarize_point(records: list[RunRecord], ref_records: list[RunRecord] | None) -> dict:
    """Aggregate reps of one (variant, point) with relative change vs reference."""
    first = records[0]
    update = _mean_sd([r.update_s for r in records])
    comm = _mean_sd([r.communicate_s for r in records])
    deliver = _mean_sd([r.deliver_s for r in records])
    total = _mean_sd([r.total_s for r in records])
    rel_total = ""
    rel_deliver = ""
    if ref_records:
        ref_total = statistics.fmean([r.total_s for r in ref_records])
        ref_deliver = statistics.fmean([r.deliver_s for r in ref_records])
        if ref_total > 0.0:
            rel_total = repr((total[0] - ref_total) / ref_total)
        if ref_deliver > 0.0:
            rel_deliver = repr((deliver[0] - ref_deliver) / ref_deliver)
    return {
        "variant": first.variant, "brb": first.brb, "bts": first.bts,
        "lag": first.lag, "shards": first.shards, "threads": first.threads,
        "neurons_per_shard": first.neurons_per_shard, "reps": len(records),
        "update_mean_s": repr(update[0]), "update_sd_s": repr(update[1]),
        "communicate_mean_s": repr(comm[0]), "communicate_sd_s": repr(comm[1]),
        "deliver_mean_s": repr(deliver[0]), "deliver_sd_s": repr(deliver[1]),
        "total_mean_s": repr(total[0]), "total_sd_s": repr(total[1]),
        "rel_change_total": rel_total, "rel_change_deliver": rel_deliver,
        "error": "",
    }


def error_summary_row(strategy: DeliveryStrategy, net: NetworkConfig, message: str) -> dict:
    row = {c: "" for c in SUMMARY_CSV_COLUMNS}
    row.update(
        variant=strategy.token, brb=strategy.batch_rb, bts=strategy.batch_ts,
        lag=strategy.lag, shards=net.shards, threads=net.threads_per_shard,
        neurons_per_shard=net.neurons_per_shard, reps=0, error=message,
    )
    return row


def write_summary_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def weak_scaling_sweep(
    base_cfg: SimConfig,
    shard_counts: list[int],
    variants: list[DeliveryStrategy] | None = None,
    out_prefix: str | None = None,
) -> tuple[list[RunRecord], list[dict]]:
    """Fixed per-shard workload across ascending shard counts.

    Each point runs the reference strategy plus every requested variant
    for ``base_cfg.repetitions`` repetitions on one shared network
    build. Summary rows carry mean and standard deviation per phase and
    the relative change against the point's reference mean. A failing
    point contributes an error row instead of aborting the sweep.
    """
    if sorted(shard_counts) != list(shard_counts):
        raise ConfigError("shard counts must be ascending")
    if variants is None:
        variants = [base_cfg.strategy]
    ref = DeliveryStrategy(variant="ref")
    strategies = [ref] + [v for v in variants if v.token != ref.token]

    all_records: list[RunRecord] = []
    summary_rows: list[dict] = []
    for m in shard_counts:
        net = replace(base_cfg.network, shards=m)
        try:
            probe = replace(base_cfg, network=net, strategy=ref)
            sim_probe = Simulation(probe)
            build = sim_probe.build
        except Exception as exc:  # noqa: BLE001 - sweep must emit partial results
            for strat in strategies:
                summary_rows.append(error_summary_row(strat, net, str(exc)))
            continue
        point_records: dict[str, list[RunRecord]] = {}
        for strat in strategies:
            cfg_v = replace(base_cfg, network=net, strategy=strat)
            try:
                sim = Simulation(cfg_v, prebuilt=build)
                recs = [sim.run(rep=r) for r in range(base_cfg.repetitions)]
            except Exception as exc:  # noqa: BLE001
                summary_rows.append(error_summary_row(strat, net, str(exc)))
                continue
            point_records[strat.token] = recs
            all_records.extend(recs)
        ref_recs = point_records.get(ref.token)
        for strat in strategies:
            recs = point_records.get(strat.token)
            if recs:
                summary_rows.append(summarize_point(recs, ref_recs))

    if out_prefix is not None:
        write_runs_csv(f"{out_prefix}_runs.csv", all_records)
        write_runs_json(f"{out_prefix}_runs.json", all_records)
        write_summary_csv(f"{out_prefix}_summary.csv", summary_rows)
    return all_records, summary_rows


def load_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` configuration file; sections and comments ignored."""
    values: dict[str, str] = {}
    with open(path) as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise ConfigError(f"cannot parse config line: {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip().strip('"')
    return values
