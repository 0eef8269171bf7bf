"""Interchangeable spike-delivery strategies.

Every kernel routes the spike entries of one (thread, type) register
slice through the addressed target segments into the neurons' spike
ring buffers, performing for each synapse a SYN step (read continuation
flag, buffer locator, delay, weight) and an RB step (accumulate the
weight at slot (interval_start + lag + delay) mod L). They differ only
in how those steps are scheduled:

  ref     strict alternation, one synapse at a time, segment walk
          driven by the continuation flag
  bwrb    SYN results collected into auxiliary arrays and flushed in
          batches of ``batch_rb`` RB additions, ignoring segment
          boundaries; optional best-effort cache hints per batch
  lagrb   pipelined variant: auxiliary arrays used as a circular queue
          so every RB addition trails its SYN step by ``lag`` synapses
  bwts    spike entries processed in batches of ``batch_ts``; per batch
          three fixed-count loops gather segment starts, then segment
          sizes, then walk each segment with a fixed count instead of
          the continuation flag
  bwtsrb  loop structure of bwts with the auxiliary batching of bwrb
          inside the fixed-count segment walk

All variants produce the same multiset of (slot, weight) additions, so
their buffer images agree bitwise whenever weights come from the
exact-weight scheme. The auxiliary drains at the end of each kernel
guarantee no entry is left undelivered.

Within a run the strategy is fixed; :func:`make_kernel` binds all batch
parameters once so the per-interval hot loops stay monomorphic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import StoreCorruptionError

VARIANTS = ("ref", "bwrb", "lagrb", "bwts", "bwtsrb")

# CLI spellings: the -pf suffix switches on group prefetching.
TOKEN_TO_VARIANT = {
    "ref": ("ref", False),
    "bwrb": ("bwrb", False),
    "bwrb-pf": ("bwrb", True),
    "lagrb": ("lagrb", False),
    "bwts": ("bwts", False),
    "bwtsrb": ("bwtsrb", False),
    "bwtsrb-pf": ("bwtsrb", True),
}


class StrategyError(ValueError):
    """Delivery strategy parameters outside their domain."""


@dataclass(frozen=True)
class DeliveryStrategy:
    variant: str = "ref"
    batch_rb: int = 16
    batch_ts: int = 16
    lag: int = 16
    prefetch: bool = False

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise StrategyError(f"unknown variant {self.variant!r}")
        if self.batch_rb < 1 or self.batch_ts < 1 or self.lag < 1:
            raise StrategyError("batch sizes and lag must be >= 1")
        if self.prefetch and self.variant not in ("bwrb", "bwtsrb"):
            raise StrategyError("prefetch only applies to bwrb/bwtsrb")

    @property
    def token(self) -> str:
        return self.variant + ("-pf" if self.prefetch else "")

    @classmethod
    def from_token(cls, token: str, batch_rb: int = 16, batch_ts: int = 16,
                   lag: int = 16) -> "DeliveryStrategy":
        if token not in TOKEN_TO_VARIANT:
            raise StrategyError(f"unknown variant token {token!r}")
        variant, prefetch = TOKEN_TO_VARIANT[token]
        return cls(variant=variant, batch_rb=batch_rb, batch_ts=batch_ts,
                   lag=lag, prefetch=prefetch)


class DeliveryCounters:
    """Instrumentation hooks; must stay disabled for timed benchmark runs."""

    def __init__(self, record_visits: bool = False):
        self.synapses_touched = 0
        self.flushes = 0
        self.hints_issued = 0
        self.aux_leftover_max = 0
        self.barrier_events: list[int] = []
        self.record_visits = record_visits
        self.visit_arrays: dict[tuple, np.ndarray] = {}
        self._visit = None

    def enter_block(self, key: tuple, length: int) -> None:
        if self.record_visits:
            arr = self.visit_arrays.get(key)
            if arr is None:
                arr = np.zeros(length, dtype=np.int64)
                self.visit_arrays[key] = arr
            self._visit = arr
        else:
            self._visit = None

    def touch(self, lcid: int) -> None:
        self.synapses_touched += 1
        if self._visit is not None:
            self._visit[lcid] += 1

    def record_barrier(self, interval: int) -> None:
        self.barrier_events.append(interval)


def prefetch_hint(rb, target, slot, counters: DeliveryCounters | None = None) -> None:
    """Best-effort cache hint for one ring-buffer slot.

    Touches the slot without modifying it. A null locator is ignored and
    the hint never faults; on platforms without a usable prefetch
    primitive this may degrade to a no-op.
    """
    if counters is not None:
        counters.hints_issued += 1
    if rb is None or target is None:
        return
    try:
        rb[target, slot]
    except IndexError:
        return


def deliver_ref(entries, block, rb, ring_len, interval_start, counters=None):
    """Reference delivery: per entry, walk the segment and add immediately."""
    subsq_l, target_l, delay_l, weight_l, _ = block.kernel_lists()
    try:
        for entry in entries:
            lcid = entry.lcid
            base = interval_start + entry.lag
            subsq = True
            while subsq:                                            # TS
                subsq = subsq_l[lcid]                               # SYN
                tgt = target_l[lcid]
                d = delay_l[lcid]
                w = weight_l[lcid]
                lcid += 1
                if counters is not None:
                    counters.touch(lcid - 1)
                rb[tgt, (base + d) % ring_len] += w                 # RB
    except IndexError:
        raise StoreCorruptionError("segment walk ran past the synapse array")


def deliver_bwrb(entries, block, rb, ring_len, interval_start, batch_rb,
                 prefetch, counters=None):
    """Batched ring-buffer access, agnostic to segment boundaries.

    SYN results fill auxiliary arrays; every ``batch_rb``-th synapse
    triggers a flush of hints (optional) and RB additions. Remaining
    auxiliary entries are drained after the register loop.
    """
    subsq_l, target_l, delay_l, weight_l, _ = block.kernel_lists()
    tgt_aux = [0] * batch_rb
    off_aux = [0] * batch_rb
    w_aux = [0.0] * batch_rb
    i = 0
    try:
        for entry in entries:
            lcid = entry.lcid
            lag = entry.lag
            subsq = True
            while subsq:                                            # TS
                subsq = subsq_l[lcid]                               # SYN
                tgt_aux[i] = target_l[lcid]
                off_aux[i] = lag + delay_l[lcid]
                w_aux[i] = weight_l[lcid]
                i += 1
                lcid += 1
                if counters is not None:
                    counters.touch(lcid - 1)
                if i == batch_rb:
                    if prefetch:
                        for k in range(batch_rb):                   # RB*
                            prefetch_hint(
                                rb, tgt_aux[k],
                                (interval_start + off_aux[k]) % ring_len,
                                counters,
                            )
                    for k in range(batch_rb):                       # RB
                        rb[tgt_aux[k], (interval_start + off_aux[k]) % ring_len] += w_aux[k]
                    i = 0
                    if counters is not None:
                        counters.flushes += 1
    except IndexError:
        raise StoreCorruptionError("segment walk ran past the synapse array")
    pending = i
    for k in range(i):
        rb[tgt_aux[k], (interval_start + off_aux[k]) % ring_len] += w_aux[k]
        pending -= 1
    if counters is not None:
        counters.aux_leftover_max = max(counters.aux_leftover_max, pending)


def deliver_lagrb(entries, block, rb, ring_len, interval_start, lag_depth,
                  counters=None):
    """Software-pipelined delivery: RB additions trail SYN by ``lag_depth``.

    The auxiliary arrays of size lag_depth + 1 act as a circular queue
    with write index i and read index j. A single initialization phase
    of exactly lag_depth SYN-only steps fills the pipeline; afterwards
    every SYN is followed by the RB addition lagging lag_depth synapses
    behind. The queue survives segment and entry boundaries and is
    drained after the register loop.
    """
    subsq_l, target_l, delay_l, weight_l, _ = block.kernel_lists()
    size = lag_depth + 1
    tgt_aux = [0] * size
    off_aux = [0] * size
    w_aux = [0.0] * size
    i = 0
    j = 0
    is_init = True
    try:
        for entry in entries:
            lcid = entry.lcid
            lag = entry.lag
            subsq = True
            while subsq:                                            # TS
                subsq = subsq_l[lcid]                               # SYN
                tgt_aux[i] = target_l[lcid]
                off_aux[i] = lag + delay_l[lcid]
                w_aux[i] = weight_l[lcid]
                i += 1
                if i == size:
                    i = 0
                lcid += 1
                if counters is not None:
                    counters.touch(lcid - 1)
                if is_init and i == lag_depth:
                    is_init = False
                else:
                    rb[tgt_aux[j], (interval_start + off_aux[j]) % ring_len] += w_aux[j]  # RB
                    j += 1
                    if j == size:
                        j = 0
    except IndexError:
        raise StoreCorruptionError("segment walk ran past the synapse array")
    while j != i:
        rb[tgt_aux[j], (interval_start + off_aux[j]) % ring_len] += w_aux[j]
        j += 1
        if j == size:
            j = 0
    if counters is not None:
        counters.aux_leftover_max = max(counters.aux_leftover_max, (i - j) % size)


def deliver_bwts(entries, block, rb, ring_len, interval_start, batch_ts,
                 counters=None):
    """Batched target-segment processing with fixed-count segment walks.

    Full batches of ``batch_ts`` entries run three consecutive loops:
    gather segment starts, gather segment sizes, then walk each segment
    for exactly its pre-read size. Leftover entries are processed with
    the same three-loop shape sized to the remainder.
    """
    subsq_l, target_l, delay_l, weight_l, seg_l = block.kernel_lists()
    n_entries = len(entries)
    lcid_aux = [0] * batch_ts
    lag_aux = [0] * batch_ts
    size_aux = [0] * batch_ts
    debug = counters is not None
    batches = [batch_ts] * (n_entries // batch_ts)
    if n_entries % batch_ts:
        batches.append(n_entries % batch_ts)
    l = 0
    try:
        for count in batches:
            for k in range(count):
                e = entries[l + k]
                lcid_aux[k] = e.lcid
                lag_aux[k] = e.lag
            l += count
            for k in range(count):
                size_aux[k] = seg_l[lcid_aux[k]]                    # GetTSSize
            for k in range(count):
                lcid = lcid_aux[k]
                base = interval_start + lag_aux[k]
                ts_size = size_aux[k]
                if ts_size <= 0:
                    raise StoreCorruptionError(
                        f"entry lcid {lcid} does not address a segment start"
                    )
                for step in range(ts_size):                         # TS (fixed count)
                    tgt = target_l[lcid]                            # SYN
                    d = delay_l[lcid]
                    w = weight_l[lcid]
                    if debug:
                        # Continuation flags must agree with the pre-read size.
                        assert subsq_l[lcid] == (step < ts_size - 1)
                        counters.touch(lcid)
                    lcid += 1
                    rb[tgt, (base + d) % ring_len] += w             # RB
    except IndexError:
        raise StoreCorruptionError("segment walk ran past the synapse array")


def deliver_bwtsrb(entries, block, rb, ring_len, interval_start, batch_ts,
                   batch_rb, prefetch, counters=None):
    """bwts loop structure with bwrb auxiliary batching inside the walks.

    The RB auxiliary index survives across segments and entry batches;
    the final drain covers both leftover register entries (three-loop
    remainder) and leftover auxiliary entries.
    """
    subsq_l, target_l, delay_l, weight_l, seg_l = block.kernel_lists()
    n_entries = len(entries)
    lcid_aux = [0] * batch_ts
    lag_aux = [0] * batch_ts
    size_aux = [0] * batch_ts
    tgt_aux = [0] * batch_rb
    off_aux = [0] * batch_rb
    w_aux = [0.0] * batch_rb
    debug = counters is not None
    batches = [batch_ts] * (n_entries // batch_ts)
    if n_entries % batch_ts:
        batches.append(n_entries % batch_ts)
    l = 0
    i = 0
    try:
        for count in batches:
            for k in range(count):
                e = entries[l + k]
                lcid_aux[k] = e.lcid
                lag_aux[k] = e.lag
            l += count
            for k in range(count):
                size_aux[k] = seg_l[lcid_aux[k]]                    # GetTSSize
            for k in range(count):
                lcid = lcid_aux[k]
                lag = lag_aux[k]
                ts_size = size_aux[k]
                if ts_size <= 0:
                    raise StoreCorruptionError(
                        f"entry lcid {lcid} does not address a segment start"
                    )
                for step in range(ts_size):                         # TS (fixed count)
                    tgt_aux[i] = target_l[lcid]                     # SYN
                    off_aux[i] = lag + delay_l[lcid]
                    w_aux[i] = weight_l[lcid]
                    if debug:
                        assert subsq_l[lcid] == (step < ts_size - 1)
                        counters.touch(lcid)
                    i += 1
                    lcid += 1
                    if i == batch_rb:
                        if prefetch:
                            for k2 in range(batch_rb):              # RB*
                                prefetch_hint(
                                    rb, tgt_aux[k2],
                                    (interval_start + off_aux[k2]) % ring_len,
                                    counters,
                                )
                        for k2 in range(batch_rb):                  # RB
                            rb[tgt_aux[k2], (interval_start + off_aux[k2]) % ring_len] += w_aux[k2]
                        i = 0
                        if counters is not None:
                            counters.flushes += 1
    except IndexError:
        raise StoreCorruptionError("segment walk ran past the synapse array")
    pending = i
    for k in range(i):
        rb[tgt_aux[k], (interval_start + off_aux[k]) % ring_len] += w_aux[k]
        pending -= 1
    if counters is not None:
        counters.aux_leftover_max = max(counters.aux_leftover_max, pending)


def make_kernel(strategy: DeliveryStrategy):
    """Bind strategy parameters once; returns the per-slice delivery callable.

    The returned function has the uniform signature
    ``kernel(entries, block, rb, ring_len, interval_start, counters)``.
    """
    strategy.validate()
    v = strategy.variant
    if v == "ref":
        return deliver_ref
    if v == "bwrb":
        b, pf = strategy.batch_rb, strategy.prefetch

        def kernel(entries, block, rb, ring_len, interval_start, counters=None):
            deliver_bwrb(entries, block, rb, ring_len, interval_start, b, pf, counters)

        return kernel
    if v == "lagrb":
        lag = strategy.lag

        def kernel(entries, block, rb, ring_len, interval_start, counters=None):
            deliver_lagrb(entries, block, rb, ring_len, interval_start, lag, counters)

        return kernel
    if v == "bwts":
        bts = strategy.batch_ts

        def kernel(entries, block, rb, ring_len, interval_start, counters=None):
            deliver_bwts(entries, block, rb, ring_len, interval_start, bts, counters)

        return kernel
    if v == "bwtsrb":
        bts, brb, pf = strategy.batch_ts, strategy.batch_rb, strategy.prefetch

        def kernel(entries, block, rb, ring_len, interval_start, counters=None):
            deliver_bwtsrb(entries, block, rb, ring_len, interval_start, bts, brb, pf, counters)

        return kernel
    raise StrategyError(f"unknown variant {v!r}")
