"""Spiking-network simulation kernel with interchangeable spike-delivery
algorithms and a weak-scaling benchmark harness.

The dynamics are deliberately lightweight (exact-propagator LIF neurons,
static synapses) so the cost profile is dominated by the irregular
memory traffic of the delivery phase, which is what the interchangeable
delivery strategies reorganize.
"""

from .delivery import DeliveryCounters, DeliveryStrategy, make_kernel
from .dynamics import NeuronParams, NeuronPool, PropagatorMatrix, SpikeRingBuffer, propagator_init
from .harness import RunRecord, SimConfig, Simulation, Stopwatch, run_simulation, weak_scaling_sweep
from .network import NetworkConfig, build_network, network_segment_census, segment_length_census
from .oracle import DeliveryMeta, assert_equivalence, exact_weight_sampler, naive_deliver

__version__ = "0.1.0"

__all__ = [
    "DeliveryCounters",
    "DeliveryMeta",
    "DeliveryStrategy",
    "NetworkConfig",
    "NeuronParams",
    "NeuronPool",
    "PropagatorMatrix",
    "RunRecord",
    "SimConfig",
    "Simulation",
    "SpikeRingBuffer",
    "Stopwatch",
    "assert_equivalence",
    "build_network",
    "exact_weight_sampler",
    "make_kernel",
    "naive_deliver",
    "network_segment_census",
    "propagator_init",
    "run_simulation",
    "segment_length_census",
    "weak_scaling_sweep",
]
