"""Spike collection, the emulated all-to-all, and register sorting."""

from collections import Counter

import pytest

from spikebench.exchange import (
    RegisterCorruptionError,
    RoutingError,
    SpikeEntry,
    collect_spikes,
    exchange,
    sort_into_register,
    sort_into_register_threadwise,
)
from spikebench.network import NetworkConfig, RoutingTable, build_network


def toy_routing():
    routing = RoutingTable(n_neurons=4)
    routing.entries = {
        0: [(0, 0, 0, 5), (1, 1, 0, 2), (1, 0, 0, 9)],
        1: [(0, 1, 0, 0)],
        2: [],
    }
    return routing


class TestCollect:
    def test_no_spikes_all_lists_empty(self):
        send = collect_spikes([], toy_routing(), n_shards=2)
        assert send == [[], []]

    def test_fanout_three_shard_split(self):
        send = collect_spikes([(0, 7)], toy_routing(), n_shards=2)
        assert len(send[0]) == 1 and len(send[1]) == 2
        assert send[0][0] == SpikeEntry(0, 0, 5, 7)
        assert all(e.lag == 7 for e in send[1])

    def test_entry_count_equals_fanout_sum(self, rng):
        cfg = NetworkConfig(shards=2, threads_per_shard=2, neurons_per_shard=40,
                            indegree_exc=8, indegree_inh=2, seed=5)
        build = build_network(cfg)
        spikes = [(int(g), int(rng.integers(0, 15)))
                  for g in rng.integers(0, cfg.n_neurons, size=60)]
        send = collect_spikes(spikes, build.routing, cfg.shards)
        total = sum(len(lst) for lst in send)
        assert total == sum(build.routing.fanout(g) for g, _ in spikes)

    def test_unknown_source_raises(self):
        with pytest.raises(RoutingError):
            collect_spikes([(99, 0)], toy_routing(), n_shards=2)


class TestExchange:
    def test_empty_in_empty_out(self):
        assert exchange([[[], []], [[], []]]) == [[], []]

    def test_two_shard_swap(self):
        e01 = SpikeEntry(0, 0, 1, 0)
        e10 = SpikeEntry(1, 0, 2, 3)
        received = exchange([[[], [e01]], [[e10], []]])
        assert received == [[e10], [e01]]

    def test_multiset_preserved_over_random_intervals(self, rng):
        for _ in range(10):
            n_shards = int(rng.integers(1, 5))
            send = [
                [
                    [
                        SpikeEntry(int(rng.integers(0, 4)), 0,
                                   int(rng.integers(0, 100)), int(rng.integers(0, 15)))
                        for _ in range(int(rng.integers(0, 8)))
                    ]
                    for _ in range(n_shards)
                ]
                for _ in range(n_shards)
            ]
            received = exchange(send)
            sent_multiset = Counter(e for row in send for lst in row for e in lst)
            recv_multiset = Counter(e for lst in received for e in lst)
            assert sent_multiset == recv_multiset


class TestRegister:
    def test_empty_buffer_empty_register(self):
        register = sort_into_register([], n_threads=2, n_types=1)
        assert register == [[[]], [[]]]

    def test_hand_checkable_partition_preserves_order(self):
        a = SpikeEntry(0, 0, 10, 0)
        b = SpikeEntry(1, 0, 11, 0)
        c = SpikeEntry(0, 0, 12, 1)
        register = sort_into_register([a, b, c], n_threads=2, n_types=1)
        assert register[0][0] == [a, c]
        assert register[1][0] == [b]

    def test_totals_match_counting_oracle(self, rng):
        n_threads, n_types = 4, 2
        entries = [
            SpikeEntry(int(rng.integers(0, n_threads)), int(rng.integers(0, n_types)),
                       int(rng.integers(0, 1000)), int(rng.integers(0, 15)))
            for _ in range(10000)
        ]
        register = sort_into_register(entries, n_threads, n_types)
        oracle = Counter((e.target_thread, e.synapse_type) for e in entries)
        for thread in range(n_threads):
            for type_id in range(n_types):
                assert len(register[thread][type_id]) == oracle[(thread, type_id)]

    def test_stability_per_key(self, rng):
        n_threads, n_types = 3, 2
        entries = [
            SpikeEntry(int(rng.integers(0, n_threads)), int(rng.integers(0, n_types)),
                       i, int(rng.integers(0, 15)))
            for i in range(500)
        ]
        register = sort_into_register(entries, n_threads, n_types)
        for thread in range(n_threads):
            for type_id in range(n_types):
                filtered = [e for e in entries
                            if (e.target_thread, e.synapse_type) == (thread, type_id)]
                assert register[thread][type_id] == filtered

    def test_threadwise_scan_produces_identical_register(self, rng):
        entries = [
            SpikeEntry(int(rng.integers(0, 3)), int(rng.integers(0, 2)),
                       int(rng.integers(0, 50)), int(rng.integers(0, 15)))
            for _ in range(300)
        ]
        assert sort_into_register(entries, 3, 2) == sort_into_register_threadwise(entries, 3, 2)

    def test_out_of_range_thread_raises(self):
        bad = SpikeEntry(5, 0, 0, 0)
        with pytest.raises(RegisterCorruptionError):
            sort_into_register([bad], n_threads=2, n_types=1)
