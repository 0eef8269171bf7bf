"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from spikebench.exchange import SpikeEntry
from spikebench.network import SynapseBlock


def make_block(segments, delay=15):
    """Synthetic innermost synapse array from explicit segments.

    ``segments`` is a list of (source, [(target, weight), ...]) in the
    order they should appear; sources must already be non-decreasing.
    Returns the block plus the lcid of each segment start.
    """
    sources, targets, weights = [], [], []
    starts = []
    for source, synapses in segments:
        starts.append(len(sources))
        for target, weight in synapses:
            sources.append(source)
            targets.append(target)
            weights.append(weight)
    count = len(sources)
    source = np.asarray(sources, dtype=np.int64)
    subsq = np.zeros(count, dtype=np.bool_)
    seg_size = np.zeros(count, dtype=np.int32)
    if count:
        subsq[:-1] = source[1:] == source[:-1]
        for (src, synapses), start in zip(segments, starts):
            seg_size[start] = len(synapses)
    block = SynapseBlock(
        source=source,
        target=np.asarray(targets, dtype=np.int64),
        weight=np.asarray(weights, dtype=np.float64),
        delay=np.full(count, delay, dtype=np.uint8),
        subsq=subsq,
        seg_size=seg_size,
    )
    return block, starts


def entries_for(starts, lags=None):
    """Register entries addressing the given segment starts (thread 0, type 0)."""
    if lags is None:
        lags = [0] * len(starts)
    return [SpikeEntry(0, 0, lcid, lag) for lcid, lag in zip(starts, lags)]


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
