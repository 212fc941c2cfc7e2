"""Cell library: gating kinetics, ionic currents, synapses, neuron templates.

Units throughout: mV, ms, uF/cm^2 (capacitance), mS/cm^2 (conductance),
uA/cm^2 (current). Theta-cell bias is dimensionless.

Concrete template constants live in human-readable files under
``rhythmkit/templates/`` and are covered by checksum tests; the factories
below load them.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from scipy.optimize import brentq

TAU_FLOOR_MS = 0.01
SPIKE_THRESHOLD_MV = 0.0
REFRACTORY_MS = 1.0

# Standard synapse constants shared by the network builders.
EXCITATORY_REVERSAL_MV = 0.0
INHIBITORY_REVERSAL_MV = -80.0
TAU_EXCITATION_MS = 2.0
TAU_INHIBITION_FAST_MS = 10.0
# Slow inhibition decay (roughly 4x the fast value); provided as a constant
# for experiments with slow inhibitory cells, which are otherwise not modeled.
TAU_INHIBITION_SLOW_MS = 40.0

_RATE_KINDS = ("exp", "linoid", "sigmoid")
# Below this |x| the linoid form switches to its series expansion; the numba
# kernels use the same cutoff so both code paths agree bitwise-closely.
LINOID_SERIES_CUTOFF = 1e-5


@dataclass(frozen=True)
class RateFn:
    """Closed-form voltage-dependent rate (1/ms).

    exp:     a * exp((v - b) / c)
    linoid:  a * (v - b) / (1 - exp(-(v - b) / c))   (limit a*c at v == b)
    sigmoid: a / (1 + exp(-(v - b) / c))
    """

    kind: str
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.kind not in _RATE_KINDS:
            raise ValueError(f"unknown rate kind {self.kind!r}")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "exp":
            return self.a * np.exp((v - self.b) / self.c)
        if self.kind == "sigmoid":
            return self.a / (1.0 + np.exp(-(v - self.b) / self.c))
        x = (v - self.b) / self.c
        series = self.a * self.c * (1.0 + x / 2.0 + x * x / 12.0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            direct = self.a * (v - self.b) / (1.0 - np.exp(-x))
        return np.where(np.abs(x) < LINOID_SERIES_CUTOFF, series, direct)


@dataclass(frozen=True)
class GateSpec:
    """Kinetics of one gating variable x in [0, 1].

    Either a rate pair (alpha, beta) with x_inf = a/(a+b), tau = 1/(a+b),
    or an explicit sigmoid steady state with a Gaussian-bump time constant
    tau(v) = tau_base + tau_amp * exp(-((v - tau_center)/tau_width)^2).
    """

    name: str
    exponent: int = 1
    alpha: RateFn | None = None
    beta: RateFn | None = None
    v_half: float = 0.0
    k: float = 1.0
    tau_base: float = 1.0
    tau_amp: float = 0.0
    tau_center: float = 0.0
    tau_width: float = 10.0

    def __post_init__(self):
        if (self.alpha is None) != (self.beta is None):
            raise ValueError("rate-pair gates need both alpha and beta")
        if self.exponent < 1:
            raise ValueError("gate exponent must be a positive integer")

    @property
    def kind(self) -> str:
        return "rate-pair" if self.alpha is not None else "sigmoid"

    def steady_state(self, v):
        if self.alpha is not None:
            a = self.alpha(v)
            return a / (a + self.beta(v))
        v = np.asarray(v, dtype=float)
        return 1.0 / (1.0 + np.exp(-(v - self.v_half) / self.k))

    def time_constant(self, v):
        if self.alpha is not None:
            tau = 1.0 / (self.alpha(v) + self.beta(v))
        else:
            v = np.asarray(v, dtype=float)
            z = (v - self.tau_center) / self.tau_width
            tau = self.tau_base + self.tau_amp * np.exp(-z * z)
        return np.maximum(tau, TAU_FLOOR_MS)


def eval_gate(gate: GateSpec, v):
    """Steady state and (floored) time constant of a gate at voltage v."""
    return gate.steady_state(v), gate.time_constant(v)


@dataclass(frozen=True)
class CurrentSpec:
    """One ionic current g * act^p * inact^q * (v - reversal)."""

    name: str
    g_max: float
    reversal: float
    activation: GateSpec | None = None
    inactivation: GateSpec | None = None

    def __post_init__(self):
        if self.g_max < 0:
            raise ValueError(f"current {self.name!r}: g_max must be >= 0")


def ionic_current(current: CurrentSpec, v, activation=1.0, inactivation=1.0):
    """Instantaneous current (uA/cm^2, outward positive) at gate values."""
    value = current.g_max * (np.asarray(v, dtype=float) - current.reversal)
    if current.activation is not None:
        value = value * np.asarray(activation, dtype=float) ** current.activation.exponent
    if current.inactivation is not None:
        value = value * np.asarray(inactivation, dtype=float) ** current.inactivation.exponent
    return value


@dataclass(frozen=True)
class NeuronSpec:
    """A cell template: capacitance plus a set of gated ionic currents.

    kind "conductance" integrates a membrane equation; kind "theta" is the
    one-variable phase reduction handled directly by the engine.
    """

    name: str
    kind: str = "conductance"
    capacitance: float = 1.0
    currents: tuple[CurrentSpec, ...] = ()

    def __post_init__(self):
        if self.kind not in ("conductance", "theta"):
            raise ValueError(f"unknown neuron kind {self.kind!r}")
        if self.kind == "theta":
            if self.currents:
                raise ValueError("theta cells carry no ionic currents")
            return
        if self.capacitance <= 0:
            raise ValueError("capacitance must be positive")
        n_leak = sum(
            1 for c in self.currents if c.activation is None and c.inactivation is None
        )
        if n_leak != 1:
            raise ValueError(
                f"conductance cell {self.name!r} needs exactly one gateless "
                f"leak current, found {n_leak}"
            )

    @property
    def gates(self) -> tuple[GateSpec, ...]:
        """All gates in canonical order: per current, activation then inactivation."""
        out = []
        for cur in self.currents:
            if cur.activation is not None:
                out.append(cur.activation)
            if cur.inactivation is not None:
                out.append(cur.inactivation)
        return tuple(out)

    @property
    def n_state_vars(self) -> int:
        return 1 if self.kind == "theta" else 1 + len(self.gates)


@dataclass(frozen=True)
class SynapseSpec:
    """Synapse: gate x set to 1 on a presynaptic spike, then exponential decay.

    For conductance targets the current is g_max * x * (v - reversal); for
    theta targets g_max * x adds to (excitatory) or subtracts from
    (inhibitory) the cell's bias.
    """

    g_max: float
    reversal: float
    tau_decay: float
    rise: str = "set-to-one"

    def __post_init__(self):
        if self.tau_decay <= 0:
            raise ValueError("tau_decay must be positive")
        if self.g_max < 0:
            raise ValueError("g_max must be >= 0")
        if self.rise != "set-to-one":
            raise ValueError(f"unsupported rise mode {self.rise!r}")

    @property
    def polarity(self) -> str:
        """Excitatory/inhibitory classification by reversal potential.

        Unambiguous for the template values (0 mV vs -80 mV); reversals in
        between need :meth:`is_excitatory_at` with the target's rest voltage.
        """
        if self.reversal >= 0.0:
            return "excitatory"
        if self.reversal <= -70.0:
            return "inhibitory"
        raise ValueError(
            f"reversal {self.reversal} mV is between the excitatory and "
            "inhibitory template ranges; classify against a resting potential"
        )

    def is_excitatory_at(self, v_rest: float) -> bool:
        """True iff the synaptic current is inward (raises v) at v_rest."""
        return self.reversal > v_rest

    def gate_value(self, x0: float, elapsed: float) -> float:
        """Gate value after `elapsed` ms of decay from x0 with no spikes."""
        return x0 * float(np.exp(-elapsed / self.tau_decay))

    def gate_after_spike(self, x: float) -> float:
        """Gate value immediately after a presynaptic spike (idempotent)."""
        return 1.0


def steady_gates(spec: NeuronSpec, v: float) -> np.ndarray:
    """All gate steady-state values at a fixed voltage, in canonical order."""
    return np.array([float(g.steady_state(v)) for g in spec.gates])


def total_ionic_current(spec: NeuronSpec, v: float, gates: np.ndarray | None = None) -> float:
    """Sum of ionic currents (outward positive) at voltage v.

    Gates default to their steady-state values at v.
    """
    if gates is None:
        gates = steady_gates(spec, v)
    total = 0.0
    idx = 0
    for cur in spec.currents:
        act = inact = 1.0
        if cur.activation is not None:
            act = gates[idx]
            idx += 1
        if cur.inactivation is not None:
            inact = gates[idx]
            idx += 1
        total += float(ionic_current(cur, v, act, inact))
    return total


def resting_state(spec: NeuronSpec, drive: float = 0.0,
                  v_lo: float = -90.0, v_hi: float = -40.0) -> tuple[float, np.ndarray]:
    """Resting point (v_rest, steady gates) for a conductance cell.

    Solves total_ionic_current(v) = drive with gates at steady state, scanning
    [v_lo, v_hi] for the lowest sign change and polishing it by root finding.
    Raises ValueError if no rest exists in the bracket (cell is above rheobase
    or the bracket is wrong).
    """
    if spec.kind != "conductance":
        raise ValueError("resting_state applies to conductance cells")

    def f(v):
        return total_ionic_current(spec, v) - drive

    grid = np.linspace(v_lo, v_hi, 201)
    vals = np.array([f(v) for v in grid])
    sign_change = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    if sign_change.size == 0:
        raise ValueError(
            f"no resting state for {spec.name!r} in [{v_lo}, {v_hi}] mV at drive {drive}"
        )
    i = sign_change[0]
    v_rest = brentq(f, grid[i], grid[i + 1], xtol=1e-12, rtol=1e-14)
    return float(v_rest), steady_gates(spec, v_rest)


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------

_TEMPLATE_FILES = {
    "fast_spiking_interneuron": "fast_spiking_interneuron.ini",
    "excitatory_cell": "excitatory_cell.ini",
}


def _template_text(name: str) -> str:
    fname = _TEMPLATE_FILES[name]
    return resources.files("rhythmkit.templates").joinpath(fname).read_text()


def template_checksum(name: str) -> str:
    """SHA-256 of a template parameter file (part of the artifact contract)."""
    return hashlib.sha256(_template_text(name).encode("utf-8")).hexdigest()


def _parse_rate(text: str) -> RateFn:
    parts = text.split()
    if len(parts) != 4:
        raise ValueError(f"rate spec needs 'kind a b c', got {text!r}")
    return RateFn(parts[0], float(parts[1]), float(parts[2]), float(parts[3]))


_GATE_SHORT_NAMES = {"activation": "act", "inactivation": "inact"}


def _parse_gate(section, role: str, current_name: str) -> GateSpec | None:
    exp_key = f"{role}_exponent"
    if exp_key not in section:
        return None
    name = f"{current_name}.{_GATE_SHORT_NAMES[role]}"
    exponent = int(section[exp_key])
    if f"{role}_alpha" in section:
        return GateSpec(
            name=name,
            exponent=exponent,
            alpha=_parse_rate(section[f"{role}_alpha"]),
            beta=_parse_rate(section[f"{role}_beta"]),
        )
    v_half, k = (float(x) for x in section[f"{role}_xinf"].split())
    base, amp, center, width = (float(x) for x in section[f"{role}_tau"].split())
    return GateSpec(
        name=name, exponent=exponent, v_half=v_half, k=k,
        tau_base=base, tau_amp=amp, tau_center=center, tau_width=width,
    )


def _load_template(name: str, include_optional: bool = False) -> NeuronSpec:
    parser = configparser.ConfigParser()
    parser.read_string(_template_text(name))
    cell = parser["cell"]
    currents = []
    for section_name in parser.sections():
        if not section_name.startswith("current."):
            continue
        section = parser[section_name]
        if section.getboolean("optional", fallback=False) and not include_optional:
            continue
        current_name = section_name.split(".", 1)[1]
        currents.append(
            CurrentSpec(
                name=current_name,
                g_max=float(section["g"]),
                reversal=float(section["reversal"]),
                activation=_parse_gate(section, "activation", current_name),
                inactivation=_parse_gate(section, "inactivation", current_name),
            )
        )
    return NeuronSpec(
        name=cell["name"],
        kind="conductance",
        capacitance=float(cell["capacitance"]),
        currents=tuple(currents),
    )


def make_fast_firing_interneuron() -> NeuronSpec:
    """Fast-spiking interneuron with continuous firing onset.

    Fires across the 30-80 Hz band over roughly 0.4-1.4 uA/cm^2 of constant
    drive; rheobase is near 0.16 uA/cm^2.
    """
    return _load_template("fast_spiking_interneuron")


def make_excitatory_cell(with_adaptation: bool = False) -> NeuronSpec:
    """Excitatory pyramidal-type cell.

    With adaptation enabled, a slow (100 ms) non-inactivating outward current
    is added; the cell then starts firing at a nonzero rate instead of
    arbitrarily slowly.
    """
    spec = _load_template("excitatory_cell", include_optional=with_adaptation)
    if with_adaptation:
        spec = replace(spec, name="excitatory_cell_adapting")
    return spec


def make_theta_cell() -> NeuronSpec:
    """One-variable phase cell: theta' = (1 - cos th) + I (1 + cos th)."""
    return NeuronSpec(name="theta_cell", kind="theta")
