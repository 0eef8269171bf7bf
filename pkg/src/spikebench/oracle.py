"""Independent brute-force delivery reference and exact-weight scheme.

Everything here is deliberately simple and single-threaded. The
reference images are rebuilt from the connectivity dump and spike trace
files alone, never from live simulator state, so a store-layout bug in
the simulator cannot hide inside its own verification.

The exact-weight scheme makes floating-point accumulation order
irrelevant: every weight is an integer multiple of 2**-10 pA bounded by
16 pA in magnitude, so any sum of up to 2**20 weights has an integer
numerator below 2**53 and is exactly representable in binary64. Two
deliveries that add the same multiset of weights to a slot therefore
produce bit-identical slot values regardless of order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

QUANTUM = 2.0 ** -10          # pA
MAX_MAGNITUDE = 16.0          # pA
MAX_ACCUMULATIONS = 2 ** 20   # per slot, for exactness guarantee

DUMP_HEADER = ["source", "shard", "thread", "type", "lcid", "target", "weight", "delay"]
TRACE_HEADER = ["interval", "source", "lag", "shard", "thread", "type", "lcid"]


class ProvenanceError(ValueError):
    """Trace and dump do not belong to the same build or run."""


class ShapeMismatchError(ValueError):
    """Buffer images cannot be compared structurally."""


@dataclass(frozen=True)
class ExactWeightScheme:
    quantum: float = QUANTUM
    max_magnitude: float = MAX_MAGNITUDE
    max_accumulations: int = MAX_ACCUMULATIONS

    def is_exact(self, weight: float) -> bool:
        q = weight / self.quantum
        return q == int(q) and abs(weight) <= self.max_magnitude and weight != 0.0


class ExactWeightStream:
    """Deterministic stream of nonzero signed multiples of the quantum."""

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)

    def __iter__(self):
        return self

    def __next__(self) -> float:
        return float(self.take(1)[0])

    def take(self, n: int) -> np.ndarray:
        magnitudes = self._rng.integers(1, int(MAX_MAGNITUDE / QUANTUM) + 1, size=n)
        signs = self._rng.integers(0, 2, size=n) * 2 - 1
        return (magnitudes * signs).astype(np.float64) * QUANTUM


def exact_weight_sampler(seed) -> ExactWeightStream:
    return ExactWeightStream(seed)


@dataclass(frozen=True)
class DeliveryMeta:
    """Run geometry the walkers need to replay a trace.

    ``consumed_steps`` is the number of update steps the run executed;
    contributions landing before that step were read out and cleared, so
    only later ones survive in the post-run buffer image.
    """

    n_neurons: int
    ring_len: int
    interval_steps: int
    consumed_steps: int = 0


def write_dump_rows(path, rows) -> None:
    """Write connectivity rows; weights serialized with full round-trip repr."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DUMP_HEADER)
        for source, shard, thread, type_id, lcid, target, weight, delay in rows:
            w.writerow([source, shard, thread, type_id, lcid, target, repr(float(weight)), delay])


def load_connectivity_dump(path) -> list[tuple]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != DUMP_HEADER:
            raise ProvenanceError(f"unexpected dump header: {header}")
        for r in reader:
            rows.append(
                (int(r[0]), int(r[1]), int(r[2]), int(r[3]), int(r[4]), int(r[5]),
                 float(r[6]), int(r[7]))
            )
    return rows


def load_spike_trace(path) -> list[tuple]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ProvenanceError(f"unexpected trace header: {header}")
        for r in reader:
            rows.append(
                (int(r[0]), int(r[1]), int(r[2]), int(r[3]), int(r[4]), int(r[5]), int(r[6]))
            )
    return rows


def _unique_spikes(trace_rows) -> list[tuple[int, int, int]]:
    # One trace row per routing entry; a spike is unique per
    # (interval, source, lag) because a neuron steps once per grid point.
    seen = set()
    spikes = []
    for row in trace_rows:
        key = (row[0], row[1], row[2])
        if key not in seen:
            seen.add(key)
            spikes.append(key)
    return spikes


def naive_deliver(trace_path, dump_path, meta: DeliveryMeta) -> np.ndarray:
    """Rebuild the post-run ring-buffer image from files alone.

    For each recorded spike, every synapse of that source found in the
    dump receives the weight at (interval_start + lag + delay) mod L in
    a fresh image, skipping contributions the run already consumed.
    """
    dump_rows = load_connectivity_dump(dump_path)
    trace_rows = load_spike_trace(trace_path)
    by_source: dict[int, list[tuple[int, float, int]]] = {}
    for source, _shard, _thread, _type, _lcid, target, weight, delay in dump_rows:
        by_source.setdefault(source, []).append((target, weight, delay))

    image = np.zeros((meta.n_neurons, meta.ring_len), dtype=np.float64)
    ring_len = meta.ring_len
    for interval, source, lag in _unique_spikes(trace_rows):
        if source < 0 or source >= meta.n_neurons:
            raise ProvenanceError(f"trace source {source} outside network of {meta.n_neurons}")
        start = interval * meta.interval_steps
        for target, weight, delay in by_source.get(source, ()):
            position = start + lag + delay
            if position >= meta.consumed_steps:
                image[target, position % ring_len] += weight
    return image


def scalar_walk_deliver(trace_path, dump_path, meta: DeliveryMeta) -> np.ndarray:
    """Second, independently coded walker used to validate the first.

    No per-source index: for every spike the whole dump is scanned
    linearly. Quadratic and meant only for small instances.
    """
    dump_rows = load_connectivity_dump(dump_path)
    trace_rows = load_spike_trace(trace_path)
    image = np.zeros((meta.n_neurons, meta.ring_len), dtype=np.float64)
    for interval, source, lag in _unique_spikes(trace_rows):
        for row in dump_rows:
            if row[0] != source:
                continue
            target, weight, delay = row[5], row[6], row[7]
            position = interval * meta.interval_steps + lag + delay
            if position >= meta.consumed_steps:
                image[target, position % meta.ring_len] += weight
    return image


@dataclass
class EquivalenceReport:
    passed: bool
    total_mismatches: int
    checked_slots: int
    mismatches: list[tuple[int, int, float, float]] = field(default_factory=list)

    def __str__(self) -> str:
        if self.passed:
            return f"equivalent ({self.checked_slots} slots, bit-exact)"
        lines = [f"{self.total_mismatches} mismatching slots of {self.checked_slots}:"]
        for neuron, slot, a, b in self.mismatches:
            lines.append(f"  neuron {neuron} slot {slot}: {a!r} != {b!r}")
        return "\n".join(lines)


def assert_equivalence(a: np.ndarray, b: np.ndarray, max_reported: int = 10) -> EquivalenceReport:
    """Bit-level comparison of two buffer images."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    # Compare payload bits, not float equality, so signed zeros or NaNs
    # would also be flagged.
    differ = a.view(np.uint64) != b.view(np.uint64)
    total = int(differ.sum())
    report = EquivalenceReport(
        passed=(total == 0), total_mismatches=total, checked_slots=int(a.size)
    )
    if total:
        coords = np.argwhere(differ)[:max_reported]
        for neuron, slot in coords:
            report.mismatches.append(
                (int(neuron), int(slot), float(a[neuron, slot]), float(b[neuron, slot]))
            )
    return report
