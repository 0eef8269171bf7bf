"""Balanced random network construction and the process-local synapse store.

Neurons carry global ids 0..N-1 and are placed round-robin over the
M*T virtual processes: neuron g lives on virtual process g mod (M*T),
which maps to shard (emulated MPI process) vp mod M and thread vp div M.
Synapses are hosted with their target neuron. Each shard keeps them in
a three-level store indexed by [hosting thread][synapse type]; within
the innermost array synapses are sorted by source neuron, forming
source-specific target segments. One spike entry addresses a whole
segment through the index (lcid) of its first synapse.

Connectivity is sampled with replacement (multapses allowed, autapses
forbidden): every neuron receives exactly ``indegree_exc`` excitatory
and ``indegree_inh`` inhibitory synapses with uniformly drawn sources.
Excitatory synapses weigh +weight_exc, inhibitory -inhibition_ratio *
weight_exc, unless an explicit weight stream is supplied (used for the
exact-weight verification runs).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .oracle import write_dump_rows

MAX_DELAY_STEPS = 255   # synaptic delay is stored in a uint8 step count


class ConfigError(ValueError):
    """Network configuration violates a structural constraint."""


class StoreCorruptionError(RuntimeError):
    """Segment bookkeeping disagrees with the synapse array contents."""


@dataclass(frozen=True)
class NetworkConfig:
    shards: int = 2                     # emulated MPI processes (M)
    threads_per_shard: int = 2          # T
    neurons_per_shard: int = 250
    excitatory_fraction: float = 0.8
    indegree_exc: int = 40
    indegree_inh: int = 10
    weight_exc: float = 87.8            # pA
    inhibition_ratio: float = 5.0       # inhibitory weight = -ratio * weight_exc
    delay_ms: float = 1.5
    synapse_types: int = 1
    seed: int = 12345

    @property
    def n_neurons(self) -> int:
        return self.shards * self.neurons_per_shard

    @property
    def n_virtual_processes(self) -> int:
        return self.shards * self.threads_per_shard

    @property
    def n_excitatory(self) -> int:
        return int(round(self.n_neurons * self.excitatory_fraction))

    @property
    def n_inhibitory(self) -> int:
        return self.n_neurons - self.n_excitatory

    def validate(self, h: float) -> None:
        if self.shards < 1 or self.threads_per_shard < 1:
            raise ConfigError("need at least one shard and one thread")
        if self.neurons_per_shard < 0:
            raise ConfigError("neurons_per_shard must be >= 0")
        if not 0.0 <= self.excitatory_fraction <= 1.0:
            raise ConfigError("excitatory_fraction must lie in [0, 1]")
        if self.indegree_exc < 0 or self.indegree_inh < 0:
            raise ConfigError("in-degrees must be >= 0")
        if self.indegree_exc > self.n_excitatory:
            raise ConfigError("indegree_exc exceeds excitatory population")
        if self.indegree_inh > self.n_inhibitory:
            raise ConfigError("indegree_inh exceeds inhibitory population")
        if self.synapse_types < 1 or self.synapse_types > 2:
            raise ConfigError("synapse_types must be 1 or 2")
        if self.delay_ms <= 0.0:
            raise ConfigError("delay must be positive")
        steps = self.delay_ms / h
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("delay must be an integer multiple of h")
        if round(steps) > MAX_DELAY_STEPS:
            raise ConfigError(f"delay exceeds {MAX_DELAY_STEPS} steps at h={h}")

    def delay_steps(self, h: float) -> int:
        return int(round(self.delay_ms / h))

    # Round-robin placement helpers.
    def vp_of(self, gid: int) -> int:
        return gid % self.n_virtual_processes

    def shard_of(self, gid: int) -> int:
        return self.vp_of(gid) % self.shards

    def thread_of(self, gid: int) -> int:
        return self.vp_of(gid) // self.shards


@dataclass
class SynapseBlock:
    """One innermost synapse array: all synapses of one (thread, type).

    ``subsq[i]`` is True iff synapse i+1 exists and has the same source;
    ``seg_size[i]`` holds the segment length on each segment's first
    synapse and 0 elsewhere. ``target`` is the local row index of the
    target neuron inside the hosting shard's pool.
    """

    source: np.ndarray
    target: np.ndarray
    weight: np.ndarray
    delay: np.ndarray
    subsq: np.ndarray
    seg_size: np.ndarray

    def __len__(self) -> int:
        return int(self.source.shape[0])

    def segment_starts(self) -> np.ndarray:
        return np.flatnonzero(self.seg_size > 0)

    def kernel_lists(self):
        """Plain-list view for the delivery inner loops (cached)."""
        cached = getattr(self, "_kernel_lists", None)
        if cached is None:
            cached = (
                self.subsq.tolist(),
                self.target.tolist(),
                self.delay.tolist(),
                self.weight.tolist(),
                self.seg_size.tolist(),
            )
            self._kernel_lists = cached
        return cached


def _empty_block() -> SynapseBlock:
    return SynapseBlock(
        source=np.empty(0, dtype=np.int64),
        target=np.empty(0, dtype=np.int64),
        weight=np.empty(0, dtype=np.float64),
        delay=np.empty(0, dtype=np.uint8),
        subsq=np.empty(0, dtype=np.bool_),
        seg_size=np.empty(0, dtype=np.int32),
    )


class SynapseStore:
    """Three-level container of one shard's synapses: [thread][type] blocks."""

    def __init__(self, n_threads: int, n_types: int):
        self.n_threads = n_threads
        self.n_types = n_types
        self.blocks: list[list[SynapseBlock]] = [
            [_empty_block() for _ in range(n_types)] for _ in range(n_threads)
        ]

    def block(self, thread: int, synapse_type: int) -> SynapseBlock:
        return self.blocks[thread][synapse_type]

    def n_synapses(self) -> int:
        return sum(len(b) for row in self.blocks for b in row)

    def get_ts_size(self, thread: int, synapse_type: int, lcid: int) -> int:
        """Segment length stored on the segment's first synapse."""
        block = self.blocks[thread][synapse_type]
        size = int(block.seg_size[lcid])
        assert size > 0, f"lcid {lcid} does not address a segment start"
        return size


def get_ts_size(store: SynapseStore, thread: int, synapse_type: int, lcid: int) -> int:
    return store.get_ts_size(thread, synapse_type, lcid)


@dataclass
class RoutingTable:
    """Presynaptic side of communication, emulated as a lookup table.

    Maps a source neuron id to the segment starts it must address:
    (shard, thread, type, lcid) per destination innermost array.
    """

    n_neurons: int
    entries: dict[int, list[tuple[int, int, int, int]]] = field(default_factory=dict)

    def fanout(self, source: int) -> int:
        return len(self.entries.get(source, ()))

    def routes(self, source: int) -> list[tuple[int, int, int, int]]:
        return self.entries.get(source, [])


@dataclass
class NetworkBuild:
    """Everything construction produces for one network instance."""

    cfg: NetworkConfig
    h: float
    stores: list[SynapseStore]
    routing: RoutingTable
    local_to_gid: list[np.ndarray]      # per shard, ascending gids

    @property
    def delay_steps(self) -> int:
        return self.cfg.delay_steps(self.h)

    def n_synapses(self) -> int:
        return sum(s.n_synapses() for s in self.stores)

    def gid_to_local(self, gid: int) -> int:
        # Hosted gids of a shard are exactly those with matching placement,
        # in ascending order; rank within that sequence is the local index.
        cfg = self.cfg
        shard = cfg.shard_of(gid)
        arr = self.local_to_gid[shard]
        local = int(np.searchsorted(arr, gid))
        assert arr[local] == gid
        return local


def _draw_sources(rng, population_lo, population_hi, exclude, k):
    """k uniform draws from [lo, hi) excluding one id, with replacement."""
    size = population_hi - population_lo
    if exclude is not None:
        size -= 1
    if k > 0 and size <= 0:
        raise ConfigError("source population too small for requested in-degree")
    draws = rng.integers(0, size, size=k)
    if exclude is not None:
        offset = exclude - population_lo
        draws = draws + (draws >= offset)
    return population_lo + draws


def build_network(cfg: NetworkConfig, h: float = 0.1, weight_stream=None) -> NetworkBuild:
    """Construct stores, neuron placement, and the routing table.

    Deterministic for a fixed seed: every shard samples from its own
    seeded stream, targets are visited in ascending gid order, and the
    final per-block sort is stable.
    """
    cfg.validate(h)
    n = cfg.n_neurons
    n_e = cfg.n_excitatory
    m, t = cfg.shards, cfg.threads_per_shard
    n_vp = cfg.n_virtual_processes
    delay = cfg.delay_steps(h)
    n_types = cfg.synapse_types
    inh_weight = -cfg.inhibition_ratio * cfg.weight_exc

    gids = np.arange(n, dtype=np.int64)
    vps = gids % n_vp
    shard_ids = vps % m
    thread_ids = vps // m

    stores: list[SynapseStore] = []
    local_to_gid: list[np.ndarray] = []
    for s in range(m):
        hosted = gids[shard_ids == s]
        local_to_gid.append(hosted)
        rng = np.random.default_rng([cfg.seed, s])
        # Collect per (thread, type) pieces, concatenated and sorted below.
        pieces: dict[tuple[int, int], list[tuple[np.ndarray, np.ndarray, np.ndarray]]] = {}
        for local, target_gid in enumerate(hosted):
            target_gid = int(target_gid)
            thread = thread_ids[target_gid]
            in_e = target_gid < n_e
            src_e = _draw_sources(rng, 0, n_e, target_gid if in_e else None, cfg.indegree_exc)
            src_i = _draw_sources(rng, n_e, n, None if in_e else target_gid, cfg.indegree_inh)
            if weight_stream is not None:
                w_e = weight_stream.take(cfg.indegree_exc)
                w_i = weight_stream.take(cfg.indegree_inh)
            else:
                w_e = np.full(cfg.indegree_exc, cfg.weight_exc)
                w_i = np.full(cfg.indegree_inh, inh_weight)
            type_e = 0
            type_i = min(1, n_types - 1)
            for type_id, src, w in ((type_e, src_e, w_e), (type_i, src_i, w_i)):
                if len(src) == 0:
                    continue
                tgt = np.full(len(src), local, dtype=np.int64)
                pieces.setdefault((int(thread), type_id), []).append((src, tgt, w))

        store = SynapseStore(t, n_types)
        for (thread, type_id), chunks in sorted(pieces.items()):
            source = np.concatenate([c[0] for c in chunks]).astype(np.int64)
            target = np.concatenate([c[1] for c in chunks])
            weight = np.concatenate([c[2] for c in chunks]).astype(np.float64)
            order = np.argsort(source, kind="stable")
            source = source[order]
            target = target[order]
            weight = weight[order]
            store.blocks[thread][type_id] = _finalize_block(source, target, weight, delay)
        stores.append(store)

    routing = RoutingTable(n_neurons=n)
    for s, store in enumerate(stores):
        for thread in range(t):
            for type_id in range(n_types):
                block = store.blocks[thread][type_id]
                for lcid in block.segment_starts():
                    source = int(block.source[lcid])
                    routing.entries.setdefault(source, []).append(
                        (s, thread, type_id, int(lcid))
                    )
    return NetworkBuild(cfg=cfg, h=h, stores=stores, routing=routing, local_to_gid=local_to_gid)


def _finalize_block(source, target, weight, delay_steps) -> SynapseBlock:
    """Mark segment continuation flags and first-synapse segment sizes."""
    count = len(source)
    subsq = np.zeros(count, dtype=np.bool_)
    seg_size = np.zeros(count, dtype=np.int32)
    if count:
        subsq[:-1] = source[1:] == source[:-1]
        starts = np.flatnonzero(np.concatenate(([True], source[1:] != source[:-1])))
        lengths = np.diff(np.concatenate((starts, [count])))
        seg_size[starts] = lengths
    return SynapseBlock(
        source=source,
        target=target,
        weight=weight,
        delay=np.full(count, delay_steps, dtype=np.uint8),
        subsq=subsq,
        seg_size=seg_size,
    )


def segment_length_census(store: SynapseStore) -> tuple[Counter, float]:
    """Histogram of target-segment lengths in one shard's store, plus mean."""
    histogram: Counter = Counter()
    for row in store.blocks:
        for block in row:
            starts = block.segment_starts()
            for length in block.seg_size[starts]:
                histogram[int(length)] += 1
    total = sum(length * count for length, count in histogram.items())
    segments = sum(histogram.values())
    mean = total / segments if segments else 0.0
    return histogram, mean


def network_segment_census(build: NetworkBuild) -> tuple[Counter, float]:
    """Census merged over all shards."""
    histogram: Counter = Counter()
    for store in build.stores:
        h, _ = segment_length_census(store)
        histogram.update(h)
    total = sum(length * count for length, count in histogram.items())
    segments = sum(histogram.values())
    mean = total / segments if segments else 0.0
    return histogram, mean


def expected_mean_segment_length(cfg: NetworkConfig) -> float:
    """Analytic segment-length mean under the uniform-sampling model.

    Synapse counts per innermost array are deterministic; the number of
    segments equals the number of distinct sources that hit the array,
    whose expectation follows from per-draw miss probabilities. The
    returned value is total synapses over expected total segments.
    """
    n = cfg.n_neurons
    n_e = cfg.n_excitatory
    n_i = cfg.n_inhibitory
    k_e, k_i = cfg.indegree_exc, cfg.indegree_inh
    n_vp = cfg.n_virtual_processes

    vps = np.arange(n, dtype=np.int64) % n_vp
    is_e = np.arange(n) < n_e
    total_synapses = n * (k_e + k_i)
    expected_segments = 0.0
    for vp in range(n_vp):
        hosted = vps == vp
        ne_v = int(np.count_nonzero(hosted & is_e))
        ni_v = int(np.count_nonzero(hosted & ~is_e))
        if k_e > 0 and n_e > 0:
            # P(one excitatory draw of target t misses source s):
            # (1 - 1/(N_E - 1)) when t is itself excitatory, else (1 - 1/N_E).
            miss_from_e = (1.0 - 1.0 / max(n_e - 1, 1)) ** k_e if n_e > 1 else 0.0
            miss_from_i = (1.0 - 1.0 / n_e) ** k_e
            unhit_off = miss_from_e ** ne_v * miss_from_i ** ni_v
            unhit_on = (miss_from_e ** max(ne_v - 1, 0)) * miss_from_i ** ni_v
            expected_segments += ne_v * (1.0 - unhit_on) + (n_e - ne_v) * (1.0 - unhit_off)
        if k_i > 0 and n_i > 0:
            miss_from_i = (1.0 - 1.0 / max(n_i - 1, 1)) ** k_i if n_i > 1 else 0.0
            miss_from_e = (1.0 - 1.0 / n_i) ** k_i
            unhit_off = miss_from_i ** ni_v * miss_from_e ** ne_v
            unhit_on = (miss_from_i ** max(ni_v - 1, 0)) * miss_from_e ** ne_v
            expected_segments += ni_v * (1.0 - unhit_on) + (n_i - ni_v) * (1.0 - unhit_off)
    if expected_segments == 0.0:
        return 0.0
    return total_synapses / expected_segments


def connectivity_dump_rows(build: NetworkBuild):
    """Flat dump rows: (source, shard, thread, type, lcid, target_gid, weight, delay).

    Row order is deterministic (shard, thread, type, lcid ascending).
    """
    for s, store in enumerate(build.stores):
        gids = build.local_to_gid[s]
        for thread in range(store.n_threads):
            for type_id in range(store.n_types):
                block = store.blocks[thread][type_id]
                for lcid in range(len(block)):
                    yield (
                        int(block.source[lcid]),
                        s,
                        thread,
                        type_id,
                        lcid,
                        int(gids[block.target[lcid]]),
                        float(block.weight[lcid]),
                        int(block.delay[lcid]),
                    )


def write_connectivity_dump(build: NetworkBuild, path) -> None:
    write_dump_rows(path, connectivity_dump_rows(build))


def verify_store_segments(store: SynapseStore) -> None:
    """Cross-check subsq chains against seg_size bookkeeping; raises on drift."""
    for thread in range(store.n_threads):
        for type_id in range(store.n_types):
            block = store.blocks[thread][type_id]
            count = len(block)
            covered = 0
            for lcid in block.segment_starts():
                size = int(block.seg_size[lcid])
                covered += size
                for i in range(size):
                    expect_subsq = i < size - 1
                    if bool(block.subsq[lcid + i]) != expect_subsq:
                        raise StoreCorruptionError(
                            f"subsq/seg_size mismatch at thread {thread} "
                            f"type {type_id} lcid {lcid + i}"
                        )
            if covered != count:
                raise StoreCorruptionError(
                    f"segment sizes cover {covered} of {count} synapses "
                    f"in thread {thread} type {type_id}"
                )
