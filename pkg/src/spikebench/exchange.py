"""Emulated inter-shard spike communication.

Shards live in one OS process; the all-to-all is an in-memory
concatenation ordered by sending shard, which mirrors how a real
exchange fills per-rank receive buffers. Timings taken around this
phase are therefore labeled as emulated communication cost.

After the exchange, each shard sorts its receive buffer into the
spike-receive register, a per-[thread][type] staging area. Conceptually
every destination-thread worker scans the whole buffer and copies only
entries addressed to itself (write-exclusive partitioning); a single
barrier then separates sorting from delivery. The sequential emulation
performs one stable partition pass, which produces the identical
register contents; ``sort_into_register_threadwise`` keeps the literal
per-worker scan for verification.
"""

from __future__ import annotations

import csv
from typing import NamedTuple

from .network import RoutingTable
from .oracle import TRACE_HEADER


class RoutingError(KeyError):
    """A spike references a source id the routing table cannot know."""


class RegisterCorruptionError(ValueError):
    """A receive-buffer entry addresses a thread outside the shard."""


class SpikeEntry(NamedTuple):
    target_thread: int
    synapse_type: int
    lcid: int
    lag: int


def collect_spikes(
    spikes, routing: RoutingTable, n_shards: int
) -> list[list[SpikeEntry]]:
    """Expand one shard's emitted spikes into per-destination send lists.

    ``spikes`` is an iterable of (source gid, lag). Every routing entry
    of a source contributes one :class:`SpikeEntry` carrying the lag.
    """
    send: list[list[SpikeEntry]] = [[] for _ in range(n_shards)]
    for source, lag in spikes:
        if source < 0 or source >= routing.n_neurons:
            raise RoutingError(f"unknown source id {source}")
        for shard, thread, type_id, lcid in routing.routes(source):
            send[shard].append(SpikeEntry(thread, type_id, lcid, lag))
    return send


def exchange(send_lists: list[list[list[SpikeEntry]]]) -> list[list[SpikeEntry]]:
    """All-to-all: concatenate everything addressed to each shard.

    ``send_lists[src][dst]`` holds what shard src sends to shard dst.
    The receive buffer of a shard is ordered by sending shard, then by
    send order, preserving the global entry multiset.
    """
    n_shards = len(send_lists)
    receive: list[list[SpikeEntry]] = []
    for dst in range(n_shards):
        buf: list[SpikeEntry] = []
        for src in range(n_shards):
            buf.extend(send_lists[src][dst])
        receive.append(buf)
    return receive


def sort_into_register(
    receive_buffer: list[SpikeEntry], n_threads: int, n_types: int
) -> list[list[list[SpikeEntry]]]:
    """Partition a receive buffer by (thread, type), order-preserving."""
    register: list[list[list[SpikeEntry]]] = [
        [[] for _ in range(n_types)] for _ in range(n_threads)
    ]
    for entry in receive_buffer:
        if entry.target_thread >= n_threads or entry.target_thread < 0:
            raise RegisterCorruptionError(
                f"entry thread {entry.target_thread} outside 0..{n_threads - 1}"
            )
        register[entry.target_thread][entry.synapse_type].append(entry)
    return register


def sort_into_register_threadwise(
    receive_buffer: list[SpikeEntry], n_threads: int, n_types: int
) -> list[list[list[SpikeEntry]]]:
    """Literal write-exclusive scheme: each worker scans the whole buffer."""
    register: list[list[list[SpikeEntry]]] = [
        [[] for _ in range(n_types)] for _ in range(n_threads)
    ]
    for worker in range(n_threads):
        for entry in receive_buffer:
            if entry.target_thread >= n_threads or entry.target_thread < 0:
                raise RegisterCorruptionError(
                    f"entry thread {entry.target_thread} outside 0..{n_threads - 1}"
                )
            if entry.target_thread == worker:
                register[worker][entry.synapse_type].append(entry)
    return register


def write_spike_trace(path, rows) -> None:
    """Trace rows: (interval, source, lag, shard, thread, type, lcid)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_HEADER)
        writer.writerows(rows)
