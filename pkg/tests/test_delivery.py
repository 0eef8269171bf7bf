"""Delivery strategies: hand checks, cross-variant bit equivalence, hooks."""

import numpy as np
import pytest
from conftest import entries_for, make_block

from spikebench.delivery import (
    DeliveryCounters,
    DeliveryStrategy,
    StrategyError,
    deliver_bwrb,
    deliver_bwts,
    deliver_bwtsrb,
    deliver_lagrb,
    deliver_ref,
    make_kernel,
    prefetch_hint,
)
from spikebench.exchange import SpikeEntry, collect_spikes, exchange, sort_into_register
from spikebench.network import NetworkConfig, StoreCorruptionError, build_network
from spikebench.oracle import exact_weight_sampler

RING_LEN = 30
INTERVAL_STEPS = 15

ALL_KERNEL_CALLS = [
    ("ref", lambda e, b, rb, start, c=None: deliver_ref(e, b, rb, RING_LEN, start, c)),
]
for _brb in (1, 2, 3, 16, 64):
    for _pf in (False, True):
        ALL_KERNEL_CALLS.append(
            (f"bwrb{_brb}{'pf' if _pf else ''}",
             lambda e, b, rb, start, c=None, brb=_brb, pf=_pf:
             deliver_bwrb(e, b, rb, RING_LEN, start, brb, pf, c))
        )
for _lag in (1, 2, 8, 16):
    ALL_KERNEL_CALLS.append(
        (f"lagrb{_lag}",
         lambda e, b, rb, start, c=None, lag=_lag:
         deliver_lagrb(e, b, rb, RING_LEN, start, lag, c))
    )
for _bts in (1, 4, 16, 64):
    ALL_KERNEL_CALLS.append(
        (f"bwts{_bts}",
         lambda e, b, rb, start, c=None, bts=_bts:
         deliver_bwts(e, b, rb, RING_LEN, start, bts, c))
    )
for _bts in (1, 4, 16):
    for _brb in (1, 3, 16):
        ALL_KERNEL_CALLS.append(
            (f"bwtsrb{_bts}.{_brb}",
             lambda e, b, rb, start, c=None, bts=_bts, brb=_brb:
             deliver_bwtsrb(e, b, rb, RING_LEN, start, bts, brb, True, c))
        )


def random_scenario(rng, n_neurons=40, n_segments=25, n_entries=None):
    """Synthetic block with exact weights plus entries addressing every segment."""
    stream = exact_weight_sampler(int(rng.integers(0, 2 ** 31)))
    segments = []
    source = 0
    for _ in range(n_segments):
        source += int(rng.integers(1, 3))
        length = int(rng.integers(1, 6))
        segments.append(
            (source,
             [(int(rng.integers(0, n_neurons)), float(stream.take(1)[0]))
              for _ in range(length)])
        )
    block, starts = make_block(segments)
    if n_entries is None:
        n_entries = len(starts)
    picks = rng.integers(0, len(starts), size=n_entries)
    entries = [
        SpikeEntry(0, 0, starts[i], int(rng.integers(0, INTERVAL_STEPS))) for i in picks
    ]
    return block, entries


class TestReference:
    def test_empty_register_no_mutation(self):
        block, _ = make_block([(0, [(1, 1.0)])])
        rb = np.zeros((3, RING_LEN))
        deliver_ref([], block, rb, RING_LEN, 0)
        assert not rb.any()

    def test_two_write_hand_check(self):
        block, starts = make_block([(4, [(0, 1.0), (1, 2.0)])], delay=15)
        rb = np.zeros((2, RING_LEN))
        lag = 3
        deliver_ref(entries_for(starts, [lag]), block, rb, RING_LEN, interval_start=15)
        position = (15 + lag + 15) % RING_LEN
        assert rb[0, position] == 1.0
        assert rb[1, position] == 2.0
        assert np.count_nonzero(rb) == 2

    def test_segment_overrun_is_corruption_error(self):
        block, starts = make_block([(0, [(0, 1.0)])])
        block.subsq[-1] = True  # corrupt the final continuation flag
        rb = np.zeros((1, RING_LEN))
        with pytest.raises(StoreCorruptionError):
            deliver_ref(entries_for(starts), block, rb, RING_LEN, 0)


class TestCrossVariantEquivalence:
    def test_all_variants_bit_identical_on_random_instances(self, rng):
        for _ in range(30):
            block, entries = random_scenario(rng)
            start = int(rng.integers(0, 10)) * INTERVAL_STEPS
            reference = np.zeros((40, RING_LEN))
            deliver_ref(entries, block, reference, RING_LEN, start)
            for name, call in ALL_KERNEL_CALLS[1:]:
                rb = np.zeros((40, RING_LEN))
                call(entries, block, rb, start)
                assert np.array_equal(
                    reference.view(np.uint64), rb.view(np.uint64)
                ), f"{name} diverged from reference"

    def test_drain_only_path_fewer_synapses_than_batch(self):
        block, starts = make_block([(0, [(0, 0.5), (1, 0.25)])])
        entries = entries_for(starts, [2])
        reference = np.zeros((2, RING_LEN))
        deliver_ref(entries, block, reference, RING_LEN, 0)
        rb = np.zeros((2, RING_LEN))
        deliver_bwrb(entries, block, rb, RING_LEN, 0, batch_rb=16, prefetch=False)
        assert np.array_equal(reference, rb)

    def test_lagrb_pure_init_plus_drain(self):
        block, starts = make_block([(0, [(0, 0.5), (1, 0.25)])])
        entries = entries_for(starts)
        reference = np.zeros((2, RING_LEN))
        deliver_ref(entries, block, reference, RING_LEN, 0)
        rb = np.zeros((2, RING_LEN))
        deliver_lagrb(entries, block, rb, RING_LEN, 0, lag_depth=16)
        assert np.array_equal(reference, rb)

    def test_bwts_remainder_only_path(self):
        block, starts = make_block([(0, [(0, 1.0)]), (1, [(1, 2.0), (0, 3.0)])])
        entries = entries_for(starts, [1, 5])
        reference = np.zeros((2, RING_LEN))
        deliver_ref(entries, block, reference, RING_LEN, 0)
        rb = np.zeros((2, RING_LEN))
        deliver_bwts(entries, block, rb, RING_LEN, 0, batch_ts=16)
        assert np.array_equal(reference, rb)

    def test_boundary_agnostic_batching_mid_segment_flush(self):
        """Segments of length 3 with batch 2: flushes land mid-segment."""
        block, starts = make_block(
            [(0, [(0, 0.5), (1, 0.25), (2, 0.125)]),
             (3, [(1, 1.0), (2, 2.0), (0, 4.0)])]
        )
        entries = entries_for(starts, [0, 9])
        reference = np.zeros((3, RING_LEN))
        deliver_ref(entries, block, reference, RING_LEN, 0)
        for maker in (
            lambda rb: deliver_bwrb(entries, block, rb, RING_LEN, 0, 2, False),
            lambda rb: deliver_lagrb(entries, block, rb, RING_LEN, 0, 2),
        ):
            rb = np.zeros((3, RING_LEN))
            maker(rb)
            assert np.array_equal(reference, rb)

    def test_single_entry_single_synapse_bwtsrb(self):
        block, starts = make_block([(0, [(0, 1.5)])])
        entries = entries_for(starts, [4])
        reference = np.zeros((1, RING_LEN))
        deliver_ref(entries, block, reference, RING_LEN, 15)
        rb = np.zeros((1, RING_LEN))
        deliver_bwtsrb(entries, block, rb, RING_LEN, 15, 16, 16, True)
        assert np.array_equal(reference, rb)

    def test_full_pipeline_equivalence_through_built_network(self, rng):
        """Register slices from a real build, all variants vs reference."""
        cfg = NetworkConfig(shards=2, threads_per_shard=2, neurons_per_shard=60,
                            indegree_exc=12, indegree_inh=3, seed=31)
        stream = exact_weight_sampler(77)
        build = build_network(cfg, weight_stream=stream)
        spikes = [(int(g), int(rng.integers(0, INTERVAL_STEPS)))
                  for g in rng.integers(0, cfg.n_neurons, size=50)]
        send = collect_spikes(spikes, build.routing, cfg.shards)
        empty = [[[] for _ in range(cfg.shards)] for _ in range(cfg.shards - 1)]
        receive = exchange([send] + empty)

        def run(kernel):
            images = []
            for s in range(cfg.shards):
                register = sort_into_register(
                    receive[s], cfg.threads_per_shard, cfg.synapse_types
                )
                rb = np.zeros((len(build.local_to_gid[s]), RING_LEN))
                for thread in range(cfg.threads_per_shard):
                    for type_id in range(cfg.synapse_types):
                        kernel(register[thread][type_id],
                               build.stores[s].block(thread, type_id),
                               rb, RING_LEN, 0, None)
                images.append(rb)
            return images

        reference = run(make_kernel(DeliveryStrategy(variant="ref")))
        for token in ("bwrb", "bwrb-pf", "lagrb", "bwts", "bwtsrb", "bwtsrb-pf"):
            for size in (1, 2, 16, 64):
                strategy = DeliveryStrategy.from_token(
                    token, batch_rb=size, batch_ts=size, lag=size
                )
                images = run(make_kernel(strategy))
                for a, b in zip(reference, images):
                    assert np.array_equal(a.view(np.uint64), b.view(np.uint64)), (
                        f"{token} size {size}"
                    )


class TestInstrumentation:
    def test_touch_once_per_addressing_spike(self, rng):
        block, entries = random_scenario(rng, n_entries=12)
        counters = DeliveryCounters(record_visits=True)
        counters.enter_block((0, 0, 0), len(block))
        rb = np.zeros((40, RING_LEN))
        deliver_ref(entries, block, rb, RING_LEN, 0, counters)
        expected = np.zeros(len(block), dtype=np.int64)
        for entry in entries:
            size = int(block.seg_size[entry.lcid])
            expected[entry.lcid:entry.lcid + size] += 1
        assert np.array_equal(counters.visit_arrays[(0, 0, 0)], expected)
        assert counters.synapses_touched == int(expected.sum())

    def test_hint_count_equals_batch_per_full_flush(self):
        segments = [(i, [(0, 1.0)]) for i in range(10)]
        block, starts = make_block(segments)
        entries = entries_for(starts)
        counters = DeliveryCounters()
        rb = np.zeros((1, RING_LEN))
        deliver_bwrb(entries, block, rb, RING_LEN, 0, batch_rb=4, prefetch=True,
                     counters=counters)
        # 10 synapses, batch 4: two full flushes, remainder drained without hints
        assert counters.flushes == 2
        assert counters.hints_issued == 8

    def test_hints_do_not_change_image(self, rng):
        block, entries = random_scenario(rng)
        on = np.zeros((40, RING_LEN))
        off = np.zeros((40, RING_LEN))
        deliver_bwrb(entries, block, on, RING_LEN, 0, 8, True)
        deliver_bwrb(entries, block, off, RING_LEN, 0, 8, False)
        assert np.array_equal(on.view(np.uint64), off.view(np.uint64))

    def test_null_locator_hint_is_noop(self):
        prefetch_hint(None, None, 0)
        prefetch_hint(np.zeros((1, 2)), None, 0)
        prefetch_hint(np.zeros((1, 2)), 5, 99)  # out of range: still no fault

    def test_post_drain_watermark_zero(self, rng):
        block, entries = random_scenario(rng)
        for call in (
            lambda c: deliver_bwrb(entries, block, np.zeros((40, RING_LEN)), RING_LEN, 0, 7, False, c),
            lambda c: deliver_lagrb(entries, block, np.zeros((40, RING_LEN)), RING_LEN, 0, 5, c),
            lambda c: deliver_bwtsrb(entries, block, np.zeros((40, RING_LEN)), RING_LEN, 0, 3, 7, False, c),
        ):
            counters = DeliveryCounters()
            call(counters)
            assert counters.aux_leftover_max == 0

    def test_bwts_rejects_mid_segment_entry(self):
        block, starts = make_block([(0, [(0, 1.0), (1, 1.0)])])
        bad = [SpikeEntry(0, 0, starts[0] + 1, 0)]
        with pytest.raises(StoreCorruptionError):
            deliver_bwts(bad, block, np.zeros((2, RING_LEN)), RING_LEN, 0, 4)


class TestStrategy:
    def test_tokens_round_trip(self):
        for token in ("ref", "bwrb", "bwrb-pf", "lagrb", "bwts", "bwtsrb", "bwtsrb-pf"):
            assert DeliveryStrategy.from_token(token).token == token

    def test_defaults_are_sixteen(self):
        s = DeliveryStrategy()
        assert (s.batch_rb, s.batch_ts, s.lag) == (16, 16, 16)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(StrategyError):
            DeliveryStrategy(variant="nope").validate()
        with pytest.raises(StrategyError):
            DeliveryStrategy(batch_rb=0).validate()
        with pytest.raises(StrategyError):
            DeliveryStrategy(variant="ref", prefetch=True).validate()
        with pytest.raises(StrategyError):
            DeliveryStrategy.from_token("bwxx")
