"""Numba kernels for the fixed-step RK4 integrator.

The engine flattens a network into plain arrays (see engine.compile_system);
everything here is loops over those arrays. All kernels are single-threaded
and deterministic. Layout codes:

  neuron_kind: 0 = conductance membrane, 1 = theta phase cell
  gate_params row: [form, ...] with form 0 = sigmoid steady state
      (v_half, k, tau_base, tau_amp, tau_center, tau_width) and form 1 =
      rate pair (alpha kind, a, b, c, beta kind, a, b, c); rate kinds
      0 = exp, 1 = linoid, 2 = sigmoid.

Forcing (noise pulses, stimulus gate sets, spike-triggered synapse resets)
is applied at step boundaries, so the ODE integrated within a step is
autonomous and smooth.
"""

import numpy as np
from numba import njit

KIND_CONDUCTANCE = 0
KIND_THETA = 1
FORM_SIGMOID = 0
FORM_RATEPAIR = 1
RATE_EXP = 0
RATE_LINOID = 1
RATE_SIGMOID = 2

TAU_FLOOR = 0.01
LINOID_CUTOFF = 1e-5
CLAMP_TOL = 1e-6
TWO_PI = 2.0 * np.pi
PI = np.pi

# numba-friendly status codes returned by run()
STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_SPIKE_OVERFLOW = 2


@njit(cache=True, inline="always")
def _rate(kind, a, b, c, v):
    if kind == RATE_EXP:
        return a * np.exp((v - b) / c)
    if kind == RATE_SIGMOID:
        return a / (1.0 + np.exp(-(v - b) / c))
    x = (v - b) / c
    if abs(x) < LINOID_CUTOFF:
        return a * c * (1.0 + x / 2.0 + x * x / 12.0)
    return a * (v - b) / (1.0 - np.exp(-x))


@njit(cache=True, inline="always")
def _gate_eval(row, v):
    """Return (x_inf, tau) for one gate_params row at voltage v."""
    if row[0] == FORM_SIGMOID:
        xinf = 1.0 / (1.0 + np.exp(-(v - row[1]) / row[2]))
        z = (v - row[5]) / row[6]
        tau = row[3] + row[4] * np.exp(-z * z)
    else:
        al = _rate(int(row[1]), row[2], row[3], row[4], v)
        be = _rate(int(row[5]), row[6], row[7], row[8], v)
        s = al + be
        xinf = al / s
        tau = 1.0 / s
    if tau < TAU_FLOOR:
        tau = TAU_FLOOR
    return xinf, tau


@njit(cache=True)
def derivative(state, drive_now,
               neuron_kind, v_idx, cap,
               gate_sidx, gate_neuron, gate_params,
               cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
               cur_g, cur_rev,
               edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
               work, out):
    """Time derivative of the full state vector into `out`.

    work is a (3, n_neurons) scratch buffer: rows are synaptic current onto
    conductance cells, bias input onto theta cells, and total ionic current.
    """
    n_neurons = v_idx.shape[0]
    for n in range(n_neurons):
        work[0, n] = 0.0
        work[1, n] = 0.0
        work[2, n] = 0.0

    for e in range(edge_sidx.shape[0]):
        x = state[edge_sidx[e]]
        tgt = edge_tgt[e]
        if neuron_kind[tgt] == KIND_CONDUCTANCE:
            v_t = state[v_idx[tgt]]
            work[0, tgt] += edge_g[e] * x * (v_t - edge_rev[e])
        else:
            work[1, tgt] += edge_sign[e] * edge_g[e] * x
        out[edge_sidx[e]] = -x / edge_tau[e]

    for gi in range(gate_sidx.shape[0]):
        v = state[v_idx[gate_neuron[gi]]]
        xinf, tau = _gate_eval(gate_params[gi], v)
        out[gate_sidx[gi]] = (xinf - state[gate_sidx[gi]]) / tau

    for c in range(cur_neuron.shape[0]):
        n = cur_neuron[c]
        v = state[v_idx[n]]
        factor = cur_g[c]
        if cur_act[c] >= 0:
            factor *= state[gate_sidx[cur_act[c]]] ** cur_aexp[c]
        if cur_inact[c] >= 0:
            factor *= state[gate_sidx[cur_inact[c]]] ** cur_iexp[c]
        work[2, n] += factor * (v - cur_rev[c])

    for n in range(n_neurons):
        i = v_idx[n]
        if neuron_kind[n] == KIND_CONDUCTANCE:
            out[i] = (-work[2, n] - work[0, n] + drive_now[n]) / cap[n]
        else:
            th = state[i]
            i_eff = drive_now[n] + work[1, n]
            out[i] = (1.0 - np.cos(th)) + i_eff * (1.0 + np.cos(th))
    return 0


@njit(cache=True)
def _rk4_into(state, dt, drive_now,
              neuron_kind, v_idx, cap,
              gate_sidx, gate_neuron, gate_params,
              cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
              cur_g, cur_rev,
              edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
              work, k1, k2, k3, k4, tmp, out):
    ns = state.shape[0]
    derivative(state, drive_now, neuron_kind, v_idx, cap,
               gate_sidx, gate_neuron, gate_params,
               cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
               cur_g, cur_rev,
               edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
               work, k1)
    for i in range(ns):
        tmp[i] = state[i] + 0.5 * dt * k1[i]
    derivative(tmp, drive_now, neuron_kind, v_idx, cap,
               gate_sidx, gate_neuron, gate_params,
               cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
               cur_g, cur_rev,
               edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
               work, k2)
    for i in range(ns):
        tmp[i] = state[i] + 0.5 * dt * k2[i]
    derivative(tmp, drive_now, neuron_kind, v_idx, cap,
               gate_sidx, gate_neuron, gate_params,
               cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
               cur_g, cur_rev,
               edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
               work, k3)
    for i in range(ns):
        tmp[i] = state[i] + dt * k3[i]
    derivative(tmp, drive_now, neuron_kind, v_idx, cap,
               gate_sidx, gate_neuron, gate_params,
               cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
               cur_g, cur_rev,
               edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
               work, k4)
    sixth = dt / 6.0
    for i in range(ns):
        out[i] = state[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return 0


@njit(cache=True)
def _clamp_unit(arr, indices):
    """Clamp arr at the given indices into [0, 1]; count real excursions."""
    events = 0
    for j in range(indices.shape[0]):
        i = indices[j]
        x = arr[i]
        if x < 0.0:
            if x < -CLAMP_TOL:
                events += 1
            arr[i] = 0.0
        elif x > 1.0:
            if x > 1.0 + CLAMP_TOL:
                events += 1
            arr[i] = 1.0
    return events


@njit(cache=True)
def step_once(state, dt, drive_now,
              neuron_kind, v_idx, cap,
              gate_sidx, gate_neuron, gate_params,
              cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
              cur_g, cur_rev,
              edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
              out):
    """One clamped RK4 step (no event handling); returns clamp event count."""
    ns = state.shape[0]
    n_neurons = v_idx.shape[0]
    work = np.empty((3, n_neurons))
    k1 = np.empty(ns)
    k2 = np.empty(ns)
    k3 = np.empty(ns)
    k4 = np.empty(ns)
    tmp = np.empty(ns)
    _rk4_into(state, dt, drive_now, neuron_kind, v_idx, cap,
              gate_sidx, gate_neuron, gate_params,
              cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
              cur_g, cur_rev,
              edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
              work, k1, k2, k3, k4, tmp, out)
    events = _clamp_unit(out, gate_sidx)
    events += _clamp_unit(out, edge_sidx)
    for n in range(n_neurons):
        if neuron_kind[n] == KIND_THETA:
            out[v_idx[n]] = out[v_idx[n]] % TWO_PI
    return events


@njit(cache=True)
def run(state0, n_steps, dt,
        neuron_kind, v_idx, cap, drive,
        gate_sidx, gate_neuron, gate_params,
        cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
        cur_g, cur_rev,
        edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
        src_ptr, src_edges,
        stim_edges, stim_times, stim_ptr,
        noise_times, noise_delta, noise_ptr,
        trace_idx, trace_stride, trace_out,
        state_stride, state_out,
        spike_t, spike_n,
        threshold, refractory,
        final_state):
    """Fixed-step simulation loop.

    Returns (status, n_spikes, clamp_events, clamp_steps, n_steps_done,
    bad_state_index). Spike times (threshold crossings, linearly interpolated
    within the step) go into spike_t/spike_n; a presynaptic spike sets the
    cell's outgoing synapse gates to 1 at the end of the step in which it
    occurred.
    """
    ns = state0.shape[0]
    n_neurons = v_idx.shape[0]
    n_edges = edge_sidx.shape[0]

    state = state0.copy()
    new = np.empty(ns)
    k1 = np.empty(ns)
    k2 = np.empty(ns)
    k3 = np.empty(ns)
    k4 = np.empty(ns)
    tmp = np.empty(ns)
    work = np.empty((3, n_neurons))
    prev_v = np.empty(n_neurons)
    drive_now = drive.copy()
    last_spike = np.full(n_neurons, -1.0e18)
    noise_cursor = noise_ptr[:-1].copy()
    stim_cursor = stim_ptr[:-1].copy()

    n_spikes = 0
    clamp_events = 0
    clamp_steps = 0
    spike_cap = spike_t.shape[0]

    if trace_stride > 0:
        for j in range(trace_idx.shape[0]):
            trace_out[0, j] = state[trace_idx[j]]
    if state_stride > 0:
        for i in range(ns):
            state_out[0, i] = state[i]

    for k in range(n_steps):
        t = k * dt

        for n in range(n_neurons):
            c = noise_cursor[n]
            hi = noise_ptr[n + 1]
            while c < hi and noise_times[c] <= t:
                drive_now[n] += noise_delta[c]
                c += 1
            noise_cursor[n] = c

        for si in range(stim_edges.shape[0]):
            e = stim_edges[si]
            c = stim_cursor[e]
            hi = stim_ptr[e + 1]
            while c < hi and stim_times[c] <= t:
                state[edge_sidx[e]] = 1.0
                c += 1
            stim_cursor[e] = c

        for n in range(n_neurons):
            prev_v[n] = state[v_idx[n]]

        _rk4_into(state, dt, drive_now, neuron_kind, v_idx, cap,
                  gate_sidx, gate_neuron, gate_params,
                  cur_neuron, cur_act, cur_inact, cur_aexp, cur_iexp,
                  cur_g, cur_rev,
                  edge_sidx, edge_tgt, edge_g, edge_rev, edge_sign, edge_tau,
                  work, k1, k2, k3, k4, tmp, new)

        for i in range(ns):
            if not np.isfinite(new[i]):
                for m in range(ns):
                    final_state[m] = state[m]
                return (STATUS_NONFINITE, n_spikes, clamp_events, clamp_steps, k, i)

        ev = _clamp_unit(new, gate_sidx)
        ev += _clamp_unit(new, edge_sidx)
        clamp_events += ev
        if ev > 0:
            clamp_steps += 1

        for n in range(n_neurons):
            vp = prev_v[n]
            vn = new[v_idx[n]]
            spiked = False
            ts = 0.0
            if neuron_kind[n] == KIND_CONDUCTANCE:
                if vp < threshold and vn >= threshold:
                    ts = t + dt * (threshold - vp) / (vn - vp)
                    if ts - last_spike[n] >= refractory:
                        spiked = True
            else:
                if vp < PI and vn >= PI:
                    ts = t + dt * (PI - vp) / (vn - vp)
                    spiked = True
                new[v_idx[n]] = vn % TWO_PI
            if spiked:
                if n_spikes >= spike_cap:
                    for m in range(ns):
                        final_state[m] = new[m]
                    return (STATUS_SPIKE_OVERFLOW, n_spikes, clamp_events,
                            clamp_steps, k + 1, -1)
                spike_t[n_spikes] = ts
                spike_n[n_spikes] = n
                n_spikes += 1
                last_spike[n] = ts
                for p in range(src_ptr[n], src_ptr[n + 1]):
                    new[edge_sidx[src_edges[p]]] = 1.0

        if trace_stride > 0 and (k + 1) % trace_stride == 0:
            row = (k + 1) // trace_stride
            for j in range(trace_idx.shape[0]):
                trace_out[row, j] = new[trace_idx[j]]
        if state_stride > 0 and (k + 1) % state_stride == 0:
            row = (k + 1) // state_stride
            for i in range(ns):
                state_out[row, i] = new[i]

        swap = state
        state = new
        new = swap

    for i in range(ns):
        final_state[i] = state[i]
    return (STATUS_OK, n_spikes, clamp_events, clamp_steps, n_steps, -1)
