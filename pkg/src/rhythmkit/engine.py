"""Deterministic fixed-step simulation of assembled networks.

The integrator is classical RK4 at a constant dt (default 0.01 ms for
conductance cells, 0.05 ms for pure-theta networks). Spikes are detected
online as upward threshold crossings (0 mV, 1 ms refractory guard) with the
crossing time linearly interpolated inside the step; theta cells spike when
the phase crosses pi. A presynaptic spike sets the cell's outgoing synapse
gates to 1 at the next step boundary. Poisson noise pulses enter as
rectangular additions to the external drive, also switched at step
boundaries.

Determinism contract: simulate() is a pure function of
(system, duration, dt, recording, seed, initial_state). Noise streams are
split per (seed, "noise", source position, source.seed, local cell index)
using the documented mixing rule in rhythmkit.rng.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cells import (
    REFRACTORY_MS,
    SPIKE_THRESHOLD_MV,
    NeuronSpec,
    resting_state,
)
from .network import NetworkSystem
from .rng import generator

DEFAULT_DT_MS = 0.01
DEFAULT_THETA_DT_MS = 0.05
# A run fails as under-resolved when more than this fraction of steps clamp.
CLAMP_STEP_BUDGET = 1e-3


class ConfigurationError(ValueError):
    """The system or the call arguments are structurally invalid."""


class NumericalBlowupError(RuntimeError):
    """Integration produced a non-finite value.

    Carries the neuron index, the failure time, and (for simulate) the
    partial result up to the failure.
    """

    def __init__(self, message, neuron_index=None, time_ms=None, partial_result=None):
        super().__init__(message)
        self.neuron_index = neuron_index
        self.time_ms = time_ms
        self.partial_result = partial_result


class UnderResolvedError(RuntimeError):
    """Too many gate-clamping steps: dt does not resolve the dynamics."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class RecordingOptions:
    """What to sample during a run, in ms between samples (0 = off).

    voltage_stride records v (or theta) for every neuron; state_stride
    records the full state vector. Strides must be integer multiples of dt.
    """

    voltage_stride: float = 0.0
    state_stride: float = 0.0


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """Output of one run: per-neuron spike times plus optional samples."""

    spike_trains: list[np.ndarray]
    dt: float
    duration: float
    seed: int
    population_slices: dict[str, tuple[int, int]]
    trace_times: np.ndarray | None = None
    traces: np.ndarray | None = None  # (n_samples, n_neurons) v or theta
    state_times: np.ndarray | None = None
    states: np.ndarray | None = None  # (n_samples, state_size)
    noise_events: list[np.ndarray] = field(default_factory=list)
    clamp_events: int = 0
    clamp_steps: int = 0
    n_steps: int = 0
    final_state: np.ndarray | None = None

    def spikes_for(self, label: str) -> list[np.ndarray]:
        lo, hi = self.population_slices[label]
        return self.spike_trains[lo:hi]


@dataclass(frozen=True, eq=False)
class CompiledSystem:
    """Flat-array form of a NetworkSystem consumed by the numba kernels."""

    system: NetworkSystem
    state_size: int
    neuron_kind: np.ndarray
    v_idx: np.ndarray
    cap: np.ndarray
    drive: np.ndarray
    gate_sidx: np.ndarray
    gate_neuron: np.ndarray
    gate_params: np.ndarray
    cur_neuron: np.ndarray
    cur_act: np.ndarray
    cur_inact: np.ndarray
    cur_aexp: np.ndarray
    cur_iexp: np.ndarray
    cur_g: np.ndarray
    cur_rev: np.ndarray
    edge_sidx: np.ndarray
    edge_tgt: np.ndarray
    edge_g: np.ndarray
    edge_rev: np.ndarray
    edge_sign: np.ndarray
    edge_tau: np.ndarray
    src_ptr: np.ndarray
    src_edges: np.ndarray
    stim_edges: np.ndarray
    stim_times: np.ndarray
    stim_ptr: np.ndarray
    stim_initial: np.ndarray  # (edge slot, initial gate) pairs
    state_owner: np.ndarray  # owning neuron per state entry (edges: target)

    def _derivative_args(self):
        return (self.neuron_kind, self.v_idx, self.cap,
                self.gate_sidx, self.gate_neuron, self.gate_params,
                self.cur_neuron, self.cur_act, self.cur_inact,
                self.cur_aexp, self.cur_iexp, self.cur_g, self.cur_rev,
                self.edge_sidx, self.edge_tgt, self.edge_g,
                self.edge_rev, self.edge_sign, self.edge_tau)


def _rate_code(kind: str) -> int:
    return {"exp": _kernels.RATE_EXP, "linoid": _kernels.RATE_LINOID,
            "sigmoid": _kernels.RATE_SIGMOID}[kind]


def _gate_row(gate) -> list[float]:
    if gate.kind == "sigmoid":
        return [_kernels.FORM_SIGMOID, gate.v_half, gate.k, gate.tau_base,
                gate.tau_amp, gate.tau_center, gate.tau_width, 0.0, 0.0]
    return [_kernels.FORM_RATEPAIR,
            _rate_code(gate.alpha.kind), gate.alpha.a, gate.alpha.b, gate.alpha.c,
            _rate_code(gate.beta.kind), gate.beta.a, gate.beta.b, gate.beta.c]


def compile_system(system: NetworkSystem) -> CompiledSystem:
    """Flatten a NetworkSystem into the canonical state layout."""
    n_neurons = system.n_neurons
    if n_neurons == 0:
        raise ConfigurationError("empty system: no neurons")

    neuron_kind = np.empty(n_neurons, dtype=np.int64)
    v_idx = np.empty(n_neurons, dtype=np.int64)
    cap = np.ones(n_neurons)
    drive = np.empty(n_neurons)

    gate_sidx, gate_neuron, gate_rows = [], [], []
    cur_fields = {k: [] for k in
                  ("neuron", "act", "inact", "aexp", "iexp", "g", "rev")}

    offset = 0
    neuron = 0
    for pop in system.populations:
        spec = pop.spec
        theta = spec.kind == "theta"
        for cell in range(pop.n):
            neuron_kind[neuron] = _kernels.KIND_THETA if theta else _kernels.KIND_CONDUCTANCE
            v_idx[neuron] = offset
            cap[neuron] = spec.capacitance
            drive[neuron] = pop.drive[cell]
            offset += 1
            if not theta:
                gate_slot_of = {}
                for gate in spec.gates:
                    gate_slot_of[id(gate)] = len(gate_sidx)
                    gate_sidx.append(offset)
                    gate_neuron.append(neuron)
                    gate_rows.append(_gate_row(gate))
                    offset += 1
                for cur in spec.currents:
                    cur_fields["neuron"].append(neuron)
                    cur_fields["g"].append(cur.g_max)
                    cur_fields["rev"].append(cur.reversal)
                    for role, slot_key, exp_key in (
                            (cur.activation, "act", "aexp"),
                            (cur.inactivation, "inact", "iexp")):
                        if role is None:
                            cur_fields[slot_key].append(-1)
                            cur_fields[exp_key].append(1)
                        else:
                            cur_fields[slot_key].append(gate_slot_of[id(role)])
                            cur_fields[exp_key].append(role.exponent)
            neuron += 1

    pop_start = {label: lo for label, (lo, hi) in system.population_slices().items()}

    edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau = [], [], [], [], [], []
    edge_src = []
    for block in system.blocks:
        syn = block.spec.synapse
        src0 = pop_start[block.spec.source]
        tgt0 = pop_start[block.spec.target]
        tgt_theta = system.population(block.spec.target).spec.kind == "theta"
        sign = 0.0
        if tgt_theta:
            sign = 1.0 if syn.polarity == "excitatory" else -1.0
        for s, t in block.edges:
            edge_sidx.append(offset)
            edge_src.append(src0 + int(s))
            edge_tgt.append(tgt0 + int(t))
            edge_g.append(block.g_per_edge)
            edge_rev.append(syn.reversal)
            edge_sign.append(sign)
            edge_tau.append(syn.tau_decay)
            offset += 1

    stim_edges, stim_schedules, stim_initial = [], [], []
    for stim in system.stimuli:
        syn = stim.synapse
        tgt = pop_start[stim.target] + stim.cell
        tgt_theta = system.population(stim.target).spec.kind == "theta"
        sign = 0.0
        if tgt_theta:
            sign = 1.0 if syn.polarity == "excitatory" else -1.0
        edge_index = len(edge_sidx)
        edge_sidx.append(offset)
        edge_src.append(-1)
        edge_tgt.append(tgt)
        edge_g.append(syn.g_max)
        edge_rev.append(syn.reversal)
        edge_sign.append(sign)
        edge_tau.append(syn.tau_decay)
        stim_edges.append(edge_index)
        stim_schedules.append(np.asarray(stim.times, dtype=float))
        stim_initial.append((offset, stim.initial_gate))
        offset += 1

    n_edges = len(edge_sidx)
    state_size = offset

    src_lists: list[list[int]] = [[] for _ in range(n_neurons)]
    for e, src in enumerate(edge_src):
        if src >= 0:
            src_lists[src].append(e)
    src_ptr = np.zeros(n_neurons + 1, dtype=np.int64)
    for n, lst in enumerate(src_lists):
        src_ptr[n + 1] = src_ptr[n] + len(lst)
    src_edges = np.array([e for lst in src_lists for e in lst] or [0],
                         dtype=np.int64)[:src_ptr[-1]]

    stim_ptr = np.zeros(n_edges + 1, dtype=np.int64)
    for idx, e in enumerate(stim_edges):
        stim_ptr[e + 1] = len(stim_schedules[idx])
    stim_ptr = np.cumsum(stim_ptr).astype(np.int64)
    stim_times = (np.concatenate(stim_schedules) if stim_schedules
                  else np.empty(0)).astype(float)

    state_owner = np.empty(state_size, dtype=np.int64)
    for n in range(n_neurons):
        state_owner[v_idx[n]] = n
    for slot, n in zip(gate_sidx, gate_neuron):
        state_owner[slot] = n
    for slot, tgt in zip(edge_sidx, edge_tgt):
        state_owner[slot] = tgt

    return CompiledSystem(
        system=system,
        state_size=state_size,
        neuron_kind=neuron_kind,
        v_idx=v_idx,
        cap=cap,
        drive=drive,
        gate_sidx=np.asarray(gate_sidx or [0], dtype=np.int64)[:len(gate_sidx)],
        gate_neuron=np.asarray(gate_neuron or [0], dtype=np.int64)[:len(gate_neuron)],
        gate_params=np.asarray(gate_rows, dtype=float).reshape(len(gate_rows), 9),
        cur_neuron=np.asarray(cur_fields["neuron"] or [0], dtype=np.int64)[:len(cur_fields["neuron"])],
        cur_act=np.asarray(cur_fields["act"] or [0], dtype=np.int64)[:len(cur_fields["act"])],
        cur_inact=np.asarray(cur_fields["inact"] or [0], dtype=np.int64)[:len(cur_fields["inact"])],
        cur_aexp=np.asarray(cur_fields["aexp"] or [0], dtype=np.int64)[:len(cur_fields["aexp"])],
        cur_iexp=np.asarray(cur_fields["iexp"] or [0], dtype=np.int64)[:len(cur_fields["iexp"])],
        cur_g=np.asarray(cur_fields["g"] or [0.0], dtype=float)[:len(cur_fields["g"])],
        cur_rev=np.asarray(cur_fields["rev"] or [0.0], dtype=float)[:len(cur_fields["rev"])],
        edge_sidx=np.asarray(edge_sidx or [0], dtype=np.int64)[:n_edges],
        edge_tgt=np.asarray(edge_tgt or [0], dtype=np.int64)[:n_edges],
        edge_g=np.asarray(edge_g or [0.0], dtype=float)[:n_edges],
        edge_rev=np.asarray(edge_rev or [0.0], dtype=float)[:n_edges],
        edge_sign=np.asarray(edge_sign or [0.0], dtype=float)[:n_edges],
        edge_tau=np.asarray(edge_tau or [1.0], dtype=float)[:n_edges],
        src_ptr=src_ptr,
        src_edges=src_edges,
        stim_edges=np.asarray(stim_edges or [0], dtype=np.int64)[:len(stim_edges)],
        stim_times=stim_times,
        stim_ptr=stim_ptr,
        stim_initial=np.asarray(stim_initial or np.empty((0, 2)), dtype=float).reshape(-1, 2),
        state_owner=state_owner,
    )


_REST_CACHE: dict[NeuronSpec, tuple[float, np.ndarray]] = {}


def _rest_for(spec: NeuronSpec) -> tuple[float, np.ndarray]:
    if spec not in _REST_CACHE:
        _REST_CACHE[spec] = resting_state(spec, 0.0)
    return _REST_CACHE[spec]


def default_initial_state(system: NetworkSystem) -> np.ndarray:
    """Zero-drive rest for conductance cells, theta=0, synapse gates at 0
    (stimulus gates at their configured initial value)."""
    comp = compile_system(system)
    state = np.zeros(comp.state_size)
    offset = 0
    for pop in system.populations:
        if pop.spec.kind == "theta":
            offset += pop.n
            continue
        v_rest, gates = _rest_for(pop.spec)
        per_cell = pop.spec.n_state_vars
        for cell in range(pop.n):
            state[offset] = v_rest
            state[offset + 1:offset + per_cell] = gates
            offset += per_cell
    for slot, value in comp.stim_initial:
        state[int(slot)] = value
    return state


def set_cell_state(system: NetworkSystem, state: np.ndarray, label: str,
                   cell: int, values: np.ndarray) -> None:
    """Write one cell's [v, gates...] (or [theta]) into a state vector."""
    pop = system.population(label)
    per_cell = pop.spec.n_state_vars
    base = 0
    for p in system.populations:
        if p.label == label:
            break
        base += p.n * p.spec.n_state_vars
    values = np.asarray(values, dtype=float)
    if values.shape != (per_cell,):
        raise ConfigurationError(
            f"cell state for {label!r} needs {per_cell} values, got {values.shape}")
    state[base + cell * per_cell: base + (cell + 1) * per_cell] = values


def get_cell_state(system: NetworkSystem, state: np.ndarray, label: str,
                   cell: int) -> np.ndarray:
    pop = system.population(label)
    per_cell = pop.spec.n_state_vars
    base = 0
    for p in system.populations:
        if p.label == label:
            break
        base += p.n * p.spec.n_state_vars
    return state[base + cell * per_cell: base + (cell + 1) * per_cell].copy()


def theta_phase_state(i_bias: float, phase: float) -> float:
    """Limit-cycle phase value for a free theta cell at the given bias.

    phase is the fraction of the cycle since the last spike, in (0, 1);
    requires i_bias > 0. Returned angle is wrapped to [0, 2*pi).
    """
    if i_bias <= 0:
        raise ConfigurationError("theta limit cycle needs positive bias")
    root = np.sqrt(i_bias)
    theta = 2.0 * np.arctan(root * np.tan(np.pi * (phase - 0.5)))
    return float(theta % (2.0 * np.pi))


def _precompute_noise(system: NetworkSystem, seed: int, duration: float):
    """Per-neuron merged (time, delta) events plus pulse-onset log."""
    n = system.n_neurons
    times = [[] for _ in range(n)]
    deltas = [[] for _ in range(n)]
    onsets = [[] for _ in range(n)]
    for pos, source in enumerate(system.noise_sources):
        lo, hi = system.population_slices()[source.target]
        if source.rate <= 0:
            continue
        for local, neuron in enumerate(range(lo, hi)):
            rng = generator(seed, "noise", pos, source.seed, local)
            t = 0.0
            while True:
                t += rng.exponential(1.0 / source.rate)
                if t > duration:
                    break
                times[neuron] += [t, t + source.width]
                deltas[neuron] += [source.amplitude, -source.amplitude]
                onsets[neuron].append(t)
    ptr = np.zeros(n + 1, dtype=np.int64)
    flat_t, flat_d = [], []
    for i in range(n):
        order = np.argsort(times[i], kind="stable") if times[i] else []
        flat_t.extend(np.asarray(times[i])[order] if len(times[i]) else [])
        flat_d.extend(np.asarray(deltas[i])[order] if len(deltas[i]) else [])
        ptr[i + 1] = len(flat_t)
    return (np.asarray(flat_t, dtype=float), np.asarray(flat_d, dtype=float),
            ptr, [np.asarray(o) for o in onsets])


def _stride_steps(stride_ms: float, dt: float, name: str) -> int:
    if stride_ms <= 0:
        return 0
    steps = int(round(stride_ms / dt))
    if steps < 1 or abs(steps * dt - stride_ms) > 1e-9 * max(1.0, stride_ms):
        raise ConfigurationError(
            f"{name} ({stride_ms} ms) must be an integer multiple of dt={dt}")
    return steps


def simulate(system: NetworkSystem, duration: float, dt: float | None = None,
             recording: RecordingOptions | None = None, seed: int = 0,
             initial_state: np.ndarray | None = None) -> SimulationResult:
    """Integrate the system over [0, duration] ms and collect spikes.

    Pure function of its arguments: identical inputs give bit-identical
    results. Raises NumericalBlowupError (with the partial result attached)
    on non-finite state and UnderResolvedError when gate clamping exceeds
    0.1% of steps.
    """
    if duration <= 0:
        raise ConfigurationError("duration must be positive")
    if dt is None:
        all_theta = all(p.spec.kind == "theta" for p in system.populations)
        dt = DEFAULT_THETA_DT_MS if all_theta else DEFAULT_DT_MS
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    recording = recording or RecordingOptions()

    comp = compile_system(system)
    n_steps = int(round(duration / dt))
    if n_steps < 1 or abs(n_steps * dt - duration) > 1e-6 * max(1.0, duration):
        raise ConfigurationError(
            f"duration {duration} ms must be an integer multiple of dt={dt}")

    trace_steps = _stride_steps(recording.voltage_stride, dt, "voltage_stride")
    state_steps = _stride_steps(recording.state_stride, dt, "state_stride")

    if initial_state is None:
        state0 = default_initial_state(system)
    else:
        state0 = np.asarray(initial_state, dtype=float)
        if state0.shape != (comp.state_size,):
            raise ConfigurationError(
                f"initial state has {state0.shape}, system needs "
                f"({comp.state_size},)")
        state0 = state0.copy()

    noise_times, noise_delta, noise_ptr, onsets = _precompute_noise(
        system, seed, duration)

    n = system.n_neurons
    spike_cap = n * (int(2 * duration) + 8)
    spike_t = np.empty(spike_cap)
    spike_n = np.empty(spike_cap, dtype=np.int64)

    n_trace_rows = (n_steps // trace_steps + 1) if trace_steps else 0
    trace_out = np.zeros((n_trace_rows, n if trace_steps else 0))
    n_state_rows = (n_steps // state_steps + 1) if state_steps else 0
    state_out = np.zeros((n_state_rows, comp.state_size if state_steps else 0))
    final_state = np.empty(comp.state_size)

    status, n_spikes, clamp_events, clamp_steps, steps_done, bad = _kernels.run(
        state0, n_steps, dt,
        comp.neuron_kind, comp.v_idx, comp.cap, comp.drive,
        comp.gate_sidx, comp.gate_neuron, comp.gate_params,
        comp.cur_neuron, comp.cur_act, comp.cur_inact,
        comp.cur_aexp, comp.cur_iexp, comp.cur_g, comp.cur_rev,
        comp.edge_sidx, comp.edge_tgt, comp.edge_g, comp.edge_rev,
        comp.edge_sign, comp.edge_tau,
        comp.src_ptr, comp.src_edges,
        comp.stim_edges, comp.stim_times, comp.stim_ptr,
        noise_times, noise_delta, noise_ptr,
        comp.v_idx, trace_steps, trace_out,
        state_steps, state_out,
        spike_t, spike_n,
        SPIKE_THRESHOLD_MV, REFRACTORY_MS,
        final_state)

    trains: list[np.ndarray] = [np.empty(0) for _ in range(n)]
    if n_spikes:
        t_arr = spike_t[:n_spikes]
        n_arr = spike_n[:n_spikes]
        for i in range(n):
            trains[i] = t_arr[n_arr == i].copy()

    def rows(stride, out, upto):
        if not stride:
            return None, None
        done = upto // stride + 1
        times = np.arange(done) * (stride * dt)
        return times, out[:done]

    trace_times, traces = rows(trace_steps, trace_out, steps_done)
    state_times, states = rows(state_steps, state_out, steps_done)

    result = SimulationResult(
        spike_trains=trains,
        dt=dt,
        duration=duration,
        seed=seed,
        population_slices=system.population_slices(),
        trace_times=trace_times,
        traces=traces,
        state_times=state_times,
        states=states,
        noise_events=onsets,
        clamp_events=int(clamp_events),
        clamp_steps=int(clamp_steps),
        n_steps=int(steps_done),
        final_state=final_state,
    )

    if status == _kernels.STATUS_NONFINITE:
        neuron = int(comp.state_owner[bad])
        t_fail = steps_done * dt
        raise NumericalBlowupError(
            f"non-finite state for neuron {neuron} at t={t_fail:.4f} ms "
            f"(dt={dt}); partial result attached",
            neuron_index=neuron, time_ms=t_fail, partial_result=result)
    if status == _kernels.STATUS_SPIKE_OVERFLOW:
        raise ConfigurationError(
            "spike buffer overflow: sustained firing above 2 spikes/ms/neuron")
    if n_steps > 0 and clamp_steps / n_steps > CLAMP_STEP_BUDGET:
        raise UnderResolvedError(
            f"{clamp_steps} of {n_steps} steps clamped gates "
            f"(> {CLAMP_STEP_BUDGET:.1%}): dt={dt} under-resolves the dynamics",
            result=result)
    return result


def derivative(system: NetworkSystem, state: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Instantaneous time derivative of a full state vector.

    Noise pulses are events applied by simulate(), not part of the
    instantaneous field; drives are the populations' static drives.
    """
    comp = compile_system(system)
    state = np.asarray(state, dtype=float)
    if state.shape != (comp.state_size,):
        raise ConfigurationError(
            f"state has shape {state.shape}, system needs ({comp.state_size},)")
    out = np.empty(comp.state_size)
    work = np.empty((3, system.n_neurons))
    _kernels.derivative(state, comp.drive, *comp._derivative_args(), work, out)
    bad = np.nonzero(~np.isfinite(out))[0]
    if bad.size:
        neuron = int(comp.state_owner[bad[0]])
        raise NumericalBlowupError(
            f"non-finite derivative for neuron {neuron} at t={t:.4f} ms",
            neuron_index=neuron, time_ms=t)
    return out


def rk4_step(system: NetworkSystem, state: np.ndarray, t: float,
             dt: float) -> tuple[np.ndarray, int]:
    """One clamped RK4 step; returns (new state, clamp event count).

    Gate values are clamped to [0, 1] after the step and theta angles are
    wrapped; no spike/noise event handling happens here.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    comp = compile_system(system)
    state = np.asarray(state, dtype=float)
    if state.shape != (comp.state_size,):
        raise ConfigurationError(
            f"state has shape {state.shape}, system needs ({comp.state_size},)")
    out = np.empty(comp.state_size)
    clamps = _kernels.step_once(state, dt, comp.drive,
                                *comp._derivative_args(), out)
    bad = np.nonzero(~np.isfinite(out))[0]
    if bad.size:
        neuron = int(comp.state_owner[bad[0]])
        raise NumericalBlowupError(
            f"non-finite state for neuron {neuron} after step at t={t:.4f} ms",
            neuron_index=neuron, time_ms=t)
    return out, int(clamps)


def detect_spikes(samples: np.ndarray, dt: float,
                  threshold: float = SPIKE_THRESHOLD_MV,
                  refractory: float = REFRACTORY_MS,
                  start_time: float = 0.0) -> np.ndarray:
    """Spike times from a uniformly sampled voltage trace.

    One spike per upward threshold crossing, linearly interpolated between
    the bracketing samples; crossings within the refractory window of the
    previous detection are ignored.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1:
        raise ConfigurationError("detect_spikes expects a 1-D trace")
    if samples.size < 2:
        return np.empty(0)
    prev, nxt = samples[:-1], samples[1:]
    idx = np.nonzero((prev < threshold) & (nxt >= threshold))[0]
    out = []
    last = -np.inf
    for i in idx:
        ts = start_time + (i + (threshold - prev[i]) / (nxt[i] - prev[i])) * dt
        if ts - last >= refractory:
            out.append(ts)
            last = ts
    return np.asarray(out)


@dataclass(frozen=True, eq=False)
class ThetaForcedResult:
    times: np.ndarray
    theta: np.ndarray
    spike_times: np.ndarray


def integrate_theta_forced(i_bias: float, g: float, tau: float, theta0: float,
                           duration: float, dt: float = DEFAULT_THETA_DT_MS,
                           ) -> ThetaForcedResult:
    """Theta cell under decaying inhibition: bias drops by g*exp(-t/tau).

    Records the phase trace at every step plus spike times (phase crossing
    pi). g=0 reduces to the free cell.
    """
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    if g < 0:
        raise ConfigurationError("g must be >= 0")
    from .cells import INHIBITORY_REVERSAL_MV, SynapseSpec, make_theta_cell
    from .network import Population, StimulusTrain, assemble_network

    pop = Population.build("theta", 1, make_theta_cell(), i_bias)
    stimuli = []
    if g > 0:
        stimuli.append(StimulusTrain(
            target="theta", cell=0,
            synapse=SynapseSpec(g, INHIBITORY_REVERSAL_MV, tau),
            initial_gate=1.0))
    system = assemble_network([pop], stimuli=stimuli)
    state0 = default_initial_state(system)
    state0[0] = float(theta0) % (2.0 * np.pi)
    result = simulate(system, duration, dt,
                      RecordingOptions(voltage_stride=dt),
                      initial_state=state0)
    return ThetaForcedResult(times=result.trace_times,
                             theta=result.traces[:, 0],
                             spike_times=result.spike_trains[0])
