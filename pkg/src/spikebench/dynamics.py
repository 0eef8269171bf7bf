"""Leaky integrate-and-fire dynamics on a fixed time grid.

Units follow the usual conventions for current-based point neurons:
potentials in mV, currents in pA, capacitance in pF, time in ms.
Subthreshold dynamics are linear (exponential postsynaptic currents),
so a single step of width ``h`` is integrated exactly by a precomputed
propagator; the only nonlinearity is the threshold test on the grid.

Each neuron owns a spike ring buffer that accumulates weighted input at
future step positions. The buffer is written by the delivery phase and
consumed (read and cleared) one slot per update step.

All state is binary64. Population state lives in flat numpy arrays
(:class:`NeuronPool`); the scalar API (:func:`neuron_update`) performs
the identical arithmetic expression and is bit-compatible with the
vectorized path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    """A model constant lies outside its valid domain."""


@dataclass(frozen=True)
class NeuronParams:
    """Constants of the current-based LIF neuron with exponential currents.

    Defaults are documented stand-ins in the Brunel balanced-network
    family: tau_membrane=10 ms, tau_synapse=0.5 ms, capacitance=250 pF,
    threshold 20 mV above rest, 2 ms refractoriness.
    """

    capacitance: float = 250.0          # pF
    tau_membrane: float = 10.0          # ms
    tau_synapse: float = 0.5            # ms
    refractory_period: float = 2.0      # ms
    threshold: float = 20.0             # mV
    reset_potential: float = 0.0        # mV
    resting_potential: float = 0.0      # mV
    external_current: float = 0.0       # pA

    def validate(self) -> None:
        if self.capacitance <= 0.0:
            raise ParameterError("capacitance must be > 0 pF")
        if self.tau_membrane <= 0.0 or self.tau_synapse <= 0.0:
            raise ParameterError("time constants must be > 0 ms")
        if self.refractory_period < 0.0:
            raise ParameterError("refractory_period must be >= 0 ms")
        if not self.threshold > self.reset_potential:
            raise ParameterError("threshold must exceed reset_potential")
        if self.tau_membrane == self.tau_synapse:
            # Equal constants would need the degenerate limiting propagator;
            # rejected here to keep the propagator branch-free.
            raise ParameterError("tau_membrane == tau_synapse is not supported")

    def refractory_steps(self, h: float) -> int:
        return int(round(self.refractory_period / h))


@dataclass(frozen=True)
class PropagatorMatrix:
    """Exact one-step state-transition entries for step width ``h``.

    p11 decays the synaptic current, p22 the membrane deviation from
    rest, p21 maps current onto potential. p20 is the affine entry that
    maps a constant external current onto potential over one step.
    """

    p11: float   # dimensionless, exp(-h/tau_synapse)
    p21: float   # mV/pA
    p22: float   # dimensionless, exp(-h/tau_membrane)
    p20: float   # mV/pA, response to constant drive
    h: float     # ms


def propagator_init(params: NeuronParams, h: float) -> PropagatorMatrix:
    """Precompute the exact subthreshold propagator for one grid step.

    Closed form for the linear system
    ``dI/dt = -I/tau_s``, ``C dV/dt = -C (V-E_L)/tau_m + I + I_ext``.
    Intermediate terms are evaluated in extended precision (and the
    current-to-potential entry through expm1 to dodge cancellation for
    nearby time constants), so every returned entry is within one ulp
    of its closed form.
    """
    params.validate()
    if h <= 0.0:
        raise ParameterError("step width h must be > 0 ms")
    ld = np.longdouble
    tau_s = ld(params.tau_synapse)
    tau_m = ld(params.tau_membrane)
    c_m = ld(params.capacitance)
    hh = ld(h)
    p11 = np.exp(-hh / tau_s)
    p22 = np.exp(-hh / tau_m)
    p21 = tau_m * tau_s / (c_m * (tau_s - tau_m)) * p22 * np.expm1(hh / tau_m - hh / tau_s)
    p20 = tau_m / c_m * (-np.expm1(-hh / tau_m))
    return PropagatorMatrix(
        p11=float(p11), p21=float(p21), p22=float(p22), p20=float(p20), h=float(h)
    )


@dataclass
class NeuronState:
    """Scalar dynamic state of one neuron."""

    membrane_potential: float = 0.0     # mV
    synaptic_current: float = 0.0       # pA
    refractory_steps_left: int = 0


def neuron_update(
    state: NeuronState,
    params: NeuronParams,
    prop: PropagatorMatrix,
    input_current: float,
    lag: int,
) -> int | None:
    """Advance one neuron by one grid step.

    ``input_current`` is the cleared ring-buffer readout for this step;
    ``lag`` is the step index within the current exchange interval.
    Returns the lag if the neuron spiked, else None. During
    refractoriness the potential is clamped to the reset value and no
    spike is emitted, but synaptic input keeps integrating.
    """
    spiked_lag = None
    if state.refractory_steps_left > 0:
        state.refractory_steps_left -= 1
        state.membrane_potential = params.reset_potential
    else:
        e_l = params.resting_potential
        v_next = (
            e_l
            + (state.membrane_potential - e_l) * prop.p22
            + state.synaptic_current * prop.p21
            + params.external_current * prop.p20
        )
        if v_next >= params.threshold:
            state.membrane_potential = params.reset_potential
            state.refractory_steps_left = params.refractory_steps(prop.h)
            spiked_lag = lag
        else:
            state.membrane_potential = v_next
    state.synaptic_current = state.synaptic_current * prop.p11 + input_current
    return spiked_lag


def ring_buffer_length(max_delay_steps: int, interval_steps: int) -> int:
    """Smallest safe buffer length: no write may land on an unread slot."""
    return int(max_delay_steps) + int(interval_steps)


class SpikeRingBuffer:
    """Per-neuron circular accumulator of delayed synaptic input.

    ``slots`` may be a view into a pool-wide matrix row; the wrapper
    only adds cursor bookkeeping and the scalar access contract.
    """

    def __init__(self, length: int | None = None, slots: np.ndarray | None = None):
        if slots is None:
            if length is None or length < 1:
                raise ValueError("ring buffer needs a positive length")
            slots = np.zeros(int(length), dtype=np.float64)
        self.slots = slots
        self.read_cursor = 0

    @property
    def length(self) -> int:
        return self.slots.shape[0]

    def add_value(self, position: int, weight: float) -> None:
        """Accumulate ``weight`` at ``position``; position must be < length."""
        if position >= self.length or position < 0:
            raise IndexError(
                f"ring position {position} outside buffer of length {self.length}"
            )
        self.slots[position] += weight

    def read_and_clear(self, step: int) -> float:
        """Return and zero the slot for ``step``; advances the read cursor."""
        idx = step % self.length
        value = float(self.slots[idx])
        self.slots[idx] = 0.0
        self.read_cursor = idx + 1
        return value


class NeuronPool:
    """All neurons hosted on one shard, stored as flat state arrays.

    A pool is owned by exactly one worker during update and delivery;
    the ring-buffer matrix ``rb`` (one row per local neuron) is the
    delivery phase's write target.
    """

    def __init__(
        self,
        params: NeuronParams,
        prop: PropagatorMatrix,
        local_to_gid: np.ndarray,
        ring_len: int,
    ):
        self.params = params
        self.prop = prop
        self.local_to_gid = np.asarray(local_to_gid, dtype=np.int64)
        self.n = int(self.local_to_gid.shape[0])
        self.ring_len = int(ring_len)
        self._refractory_steps = params.refractory_steps(prop.h)
        self.v = np.full(self.n, params.resting_potential, dtype=np.float64)
        self.i_syn = np.zeros(self.n, dtype=np.float64)
        self.refr = np.zeros(self.n, dtype=np.int64)
        self.rb = np.zeros((self.n, self.ring_len), dtype=np.float64)

    def reset_state(self, init_v: np.ndarray | None = None) -> None:
        if init_v is not None:
            self.v[:] = init_v
        else:
            self.v.fill(self.params.resting_potential)
        self.i_syn.fill(0.0)
        self.refr.fill(0)
        self.rb.fill(0.0)

    def ring_buffer(self, local_idx: int) -> SpikeRingBuffer:
        """Scalar view onto one neuron's buffer row (shared memory)."""
        return SpikeRingBuffer(slots=self.rb[local_idx])

    def advance(self, step: int) -> np.ndarray:
        """Advance every neuron by one step; returns local indices that spiked.

        Performs the same expression as :func:`neuron_update` elementwise,
        so scalar and pooled integration agree bit for bit.
        """
        p = self.params
        prop = self.prop
        idx = step % self.ring_len
        inp = self.rb[:, idx].copy()
        self.rb[:, idx] = 0.0

        refractory = self.refr > 0
        e_l = p.resting_potential
        v_next = (
            e_l
            + (self.v - e_l) * prop.p22
            + self.i_syn * prop.p21
            + p.external_current * prop.p20
        )
        spiked = ~refractory & (v_next >= p.threshold)
        self.v = np.where(refractory | spiked, p.reset_potential, v_next)
        self.refr = np.where(
            spiked, self._refractory_steps, np.where(refractory, self.refr - 1, 0)
        )
        self.i_syn = self.i_syn * prop.p11 + inp
        return np.flatnonzero(spiked)
