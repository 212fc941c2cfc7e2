"""Network construction: populations, seeded random connectivity, drives,
noise sources, and the canonical ING / PING builders.

Assembled systems are immutable; connectivity is realized at assembly time
as a deterministic function of each block's (rule, sizes, seed), so results
never depend on when or where a simulation runs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cells import (
    EXCITATORY_REVERSAL_MV,
    INHIBITORY_REVERSAL_MV,
    TAU_EXCITATION_MS,
    TAU_INHIBITION_FAST_MS,
    NeuronSpec,
    SynapseSpec,
    make_excitatory_cell,
    make_fast_firing_interneuron,
)
from .rng import derive_seed, generator


# ---------------------------------------------------------------------------
# Connectivity rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AllToAll:
    """Every ordered (source, target) pair connected."""


@dataclass(frozen=True)
class Bernoulli:
    """Each ordered pair connected independently with probability p."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"bernoulli p must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class FixedInDegree:
    """Each target receives exactly k distinct sources, chosen uniformly."""

    k: int

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("in-degree k must be >= 0")


ConnectivityRule = AllToAll | Bernoulli | FixedInDegree


def parse_rule(text: str) -> ConnectivityRule:
    """Parse 'all-to-all', 'bernoulli:p', or 'fixed-in-degree:k'."""
    text = text.strip()
    if text == "all-to-all":
        return AllToAll()
    kind, _, arg = text.partition(":")
    if kind == "bernoulli":
        return Bernoulli(float(arg))
    if kind == "fixed-in-degree":
        return FixedInDegree(int(arg))
    raise ValueError(f"unknown connectivity rule {text!r}")


def sample_connectivity(rule: ConnectivityRule, n_source: int, n_target: int,
                        seed: int, exclude_self: bool = False) -> np.ndarray:
    """Realize an adjacency as an (n_edges, 2) array of (source, target) pairs.

    Deterministic in (rule, sizes, seed). exclude_self drops the diagonal and
    is meant for recurrent blocks where source and target are one population.
    """
    if n_source < 1 or n_target < 1:
        raise ValueError("population sizes must be >= 1")
    if isinstance(rule, AllToAll):
        src, tgt = np.meshgrid(np.arange(n_source), np.arange(n_target), indexing="ij")
        edges = np.column_stack([src.ravel(), tgt.ravel()])
        if exclude_self:
            edges = edges[edges[:, 0] != edges[:, 1]]
        return edges.astype(np.int64)
    if isinstance(rule, Bernoulli):
        rng = generator(seed, "bernoulli", n_source, n_target)
        mask = rng.random((n_source, n_target)) < rule.p
        if exclude_self:
            np.fill_diagonal(mask, False)
        return np.argwhere(mask).astype(np.int64)
    if isinstance(rule, FixedInDegree):
        available = n_source - 1 if exclude_self else n_source
        if rule.k > available:
            raise ValueError(
                f"in-degree {rule.k} exceeds available sources ({available})"
            )
        rng = generator(seed, "fixed-in-degree", n_source, n_target)
        rows = []
        for tgt in range(n_target):
            candidates = np.arange(n_source)
            if exclude_self:
                candidates = candidates[candidates != tgt]
            chosen = np.sort(rng.choice(candidates, size=rule.k, replace=False))
            rows.append(np.column_stack([chosen, np.full(rule.k, tgt)]))
        if not rows:
            return np.empty((0, 2), dtype=np.int64)
        return np.vstack(rows).astype(np.int64)
    raise TypeError(f"unknown rule type {type(rule).__name__}")


def expected_in_degree(rule: ConnectivityRule, n_source: int,
                       exclude_self: bool = False) -> float:
    available = n_source - 1 if exclude_self else n_source
    if isinstance(rule, AllToAll):
        return float(available)
    if isinstance(rule, Bernoulli):
        return rule.p * available
    if isinstance(rule, FixedInDegree):
        return float(rule.k)
    raise TypeError(f"unknown rule type {type(rule).__name__}")


# ---------------------------------------------------------------------------
# Population-level specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeterogeneitySpec:
    """Per-cell drive distribution: fixed mean plus optional seeded spread."""

    mean: float
    spread_kind: str = "none"  # none | uniform-halfwidth | gaussian-sigma
    spread: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.spread_kind not in ("none", "uniform-halfwidth", "gaussian-sigma"):
            raise ValueError(f"unknown spread kind {self.spread_kind!r}")
        if self.spread < 0:
            raise ValueError("spread must be >= 0")

    def realize(self, n: int) -> np.ndarray:
        if self.spread_kind == "none" or self.spread == 0.0:
            return np.full(n, float(self.mean))
        rng = generator(self.seed, "heterogeneity", n)
        if self.spread_kind == "uniform-halfwidth":
            return self.mean + rng.uniform(-self.spread, self.spread, n)
        return self.mean + self.spread * rng.standard_normal(n)


@dataclass(frozen=True, eq=False)
class Population:
    """n cells of one template with a fixed per-cell external drive."""

    label: str
    n: int
    spec: NeuronSpec
    drive: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"population {self.label!r} must have n >= 1")
        drive = np.asarray(self.drive, dtype=float)
        if drive.shape != (self.n,):
            raise ValueError(
                f"population {self.label!r}: drive length {drive.shape} != n={self.n}"
            )
        object.__setattr__(self, "drive", drive)

    @classmethod
    def build(cls, label: str, n: int, spec: NeuronSpec,
              drive: "HeterogeneitySpec | float | np.ndarray") -> "Population":
        if isinstance(drive, HeterogeneitySpec):
            values = drive.realize(n)
        elif np.isscalar(drive):
            values = np.full(n, float(drive))
        else:
            values = np.asarray(drive, dtype=float)
        return cls(label=label, n=n, spec=spec, drive=values)


@dataclass(frozen=True)
class ConnectivityBlock:
    """Directed synaptic projection between two populations.

    The synapse's g_max is the total expected conductance per target; the
    per-edge conductance is g_max divided by the rule's expected in-degree,
    so sparse and dense variants are comparable at equal g_max.
    """

    source: str
    target: str
    rule: ConnectivityRule
    synapse: SynapseSpec
    seed: int = 0


@dataclass(frozen=True)
class NoiseSource:
    """Poisson current pulses: fixed amplitude, fixed width, random times.

    rate is events/ms per cell; amplitude is uA/cm^2 for conductance targets
    and bias units for theta targets (positive = depolarizing, the default;
    the sign is configurable through amplitude).
    """

    target: str
    rate: float
    amplitude: float
    width: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("noise rate must be >= 0")
        if self.width <= 0:
            raise ValueError("noise pulse width must be positive")


@dataclass(frozen=True)
class StimulusTrain:
    """Scheduled synaptic events onto one cell (an external, scripted input).

    The stimulus owns a private synapse gate: set to 1 at each listed time,
    decaying with the synapse's tau between events. initial_gate sets the
    gate value at t=0 (useful for a forcing that starts already active).
    Stimulus conductance is used as-is (no in-degree normalization).
    """

    target: str
    cell: int
    synapse: SynapseSpec
    times: tuple[float, ...] = ()
    initial_gate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(sorted(float(t) for t in self.times)))
        if self.cell < 0:
            raise ValueError("stimulus cell index must be >= 0")


@dataclass(frozen=True, eq=False)
class RealizedBlock:
    """A connectivity block with its sampled edges and per-edge conductance."""

    spec: ConnectivityBlock
    edges: np.ndarray  # (n_edges, 2) local (source, target) cell indices
    g_per_edge: float


@dataclass(frozen=True, eq=False)
class NetworkSystem:
    """Immutable network: populations, realized blocks, noise, stimuli.

    State-vector layout (canonical): populations in declaration order, cells
    in index order, each cell contributing [v, gates...] (or [theta]); then
    one gate per synapse edge, blocks in a canonical sorted order that does
    not depend on block declaration order; then stimulus gates in stimulus
    order.
    """

    populations: tuple[Population, ...]
    blocks: tuple[RealizedBlock, ...]
    noise_sources: tuple[NoiseSource, ...] = ()
    stimuli: tuple[StimulusTrain, ...] = ()
    _offsets: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        offsets = {}
        start = 0
        for pop in self.populations:
            offsets[pop.label] = (start, start + pop.n)
            start += pop.n
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_neurons(self) -> int:
        return sum(p.n for p in self.populations)

    @property
    def n_edges(self) -> int:
        return sum(b.edges.shape[0] for b in self.blocks) + len(self.stimuli)

    @property
    def state_size(self) -> int:
        return sum(p.n * p.spec.n_state_vars for p in self.populations) + self.n_edges

    def population(self, label: str) -> Population:
        for pop in self.populations:
            if pop.label == label:
                return pop
        raise KeyError(f"no population {label!r}")

    def slice_of(self, label: str) -> slice:
        """Global neuron-index range of a population."""
        lo, hi = self._offsets[label]
        return slice(lo, hi)

    def population_slices(self) -> dict[str, tuple[int, int]]:
        return dict(self._offsets)


def _block_sort_key(pop_index: dict[str, int], block: ConnectivityBlock):
    rule = block.rule
    rule_kind = type(rule).__name__
    rule_param = getattr(rule, "p", getattr(rule, "k", 0.0))
    syn = block.synapse
    return (pop_index[block.source], pop_index[block.target],
            syn.reversal, syn.tau_decay, syn.g_max,
            rule_kind, float(rule_param), block.seed)


def assemble_network(populations, blocks=(), noise_sources=(),
                     stimuli=()) -> NetworkSystem:
    """Validate, realize connectivity, and freeze a NetworkSystem.

    Raises ValueError on duplicate population labels or unresolved labels in
    blocks, noise sources, or stimuli.
    """
    populations = tuple(populations)
    labels = [p.label for p in populations]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate population labels: {labels}")
    if not populations:
        raise ValueError("a network needs at least one population")
    pop_index = {label: i for i, label in enumerate(labels)}
    pop_by_label = {p.label: p for p in populations}

    def check_label(label, owner):
        if label not in pop_index:
            raise ValueError(f"{owner} references unknown population {label!r}")

    realized = []
    for block in sorted(blocks, key=lambda b: _block_sort_key(pop_index, b)):
        check_label(block.source, "block")
        check_label(block.target, "block")
        src = pop_by_label[block.source]
        tgt = pop_by_label[block.target]
        recurrent = block.source == block.target
        edges = sample_connectivity(block.rule, src.n, tgt.n, block.seed,
                                    exclude_self=recurrent)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges = edges[order]
        expected = expected_in_degree(block.rule, src.n, exclude_self=recurrent)
        g = block.synapse.g_max / expected if expected > 0 else 0.0
        realized.append(RealizedBlock(spec=block, edges=edges, g_per_edge=g))

    for source in noise_sources:
        check_label(source.target, "noise source")
    for stim in stimuli:
        check_label(stim.target, "stimulus")
        if stim.cell >= pop_by_label[stim.target].n:
            raise ValueError(
                f"stimulus cell {stim.cell} out of range for {stim.target!r}"
            )

    return NetworkSystem(
        populations=populations,
        blocks=tuple(realized),
        noise_sources=tuple(noise_sources),
        stimuli=tuple(stimuli),
    )


# ---------------------------------------------------------------------------
# Rheobase and regime probes
# ---------------------------------------------------------------------------

_RHEOBASE_CACHE: dict[tuple, float] = {}


def rheobase(spec: NeuronSpec, lo: float = 0.0, hi: float = 5.0,
             tol: float = 1e-3, probe_ms: float = 1000.0,
             dt: float = 0.01) -> float:
    """Minimal constant drive at which the cell spikes within probe_ms.

    Located by parallel bisection (grid refinement) to the requested drive
    tolerance. Results are cached per (spec, bracket).
    """
    key = (spec, lo, hi, tol, probe_ms, dt)
    if key in _RHEOBASE_CACHE:
        return _RHEOBASE_CACHE[key]
    from .engine import simulate

    a, b = float(lo), float(hi)
    n_grid = 17
    while True:
        drives = np.linspace(a, b, n_grid)
        pop = Population.build("probe", n_grid, spec, drives)
        system = assemble_network([pop])
        result = simulate(system, duration=probe_ms, dt=dt)
        fired = np.array([len(tr) > 0 for tr in result.spike_trains])
        if not fired[-1]:
            raise ValueError(f"{spec.name!r} does not fire at drive {b}")
        if fired[0]:
            raise ValueError(f"{spec.name!r} already fires at drive {a}")
        first = int(np.argmax(fired))
        a, b = drives[first - 1], drives[first]
        if b - a <= tol:
            break
    _RHEOBASE_CACHE[key] = float(b)
    return float(b)


@dataclass(frozen=True)
class RegimeReport:
    mechanism: str  # "ING" or "PING"
    firing_fraction: float


def classify_regime(system: NetworkSystem, i_label: str = "I",
                    probe_ms: float = 500.0, dt: float = 0.01) -> RegimeReport:
    """Probe whether the inhibitory population fires without any other input.

    Rebuilds the system with only the named population (keeping its recurrent
    blocks) and simulates; the mechanism is ING when at least half the cells
    fire on their own, PING otherwise.
    """
    from .engine import simulate

    pop = system.population(i_label)
    kept = [b.spec for b in system.blocks
            if b.spec.source == i_label and b.spec.target == i_label]
    probe = assemble_network([pop], kept)
    result = simulate(probe, duration=probe_ms, dt=dt)
    fired = np.array([len(tr) > 0 for tr in result.spike_trains])
    fraction = float(np.mean(fired))
    return RegimeReport(mechanism="ING" if fraction >= 0.5 else "PING",
                        firing_fraction=fraction)


# ---------------------------------------------------------------------------
# Canonical rhythm constructions
# ---------------------------------------------------------------------------

def build_ing(n_i: int, drive: HeterogeneitySpec | float,
              tau_decay: float = TAU_INHIBITION_FAST_MS,
              g_ii: float = 0.5,
              rule: ConnectivityRule | None = None,
              seed: int = 0,
              spec: NeuronSpec | None = None) -> NetworkSystem:
    """Mutually inhibiting fast-firing population (interneuron gamma).

    The drive should put isolated cells above rheobase; the rhythm's
    frequency follows the cells' bias and the inhibition decay time.
    """
    spec = spec or make_fast_firing_interneuron()
    rule = rule if rule is not None else AllToAll()
    pop = Population.build("I", n_i, spec, drive)
    synapse = SynapseSpec(g_max=g_ii, reversal=INHIBITORY_REVERSAL_MV,
                          tau_decay=tau_decay)
    block = ConnectivityBlock("I", "I", rule, synapse,
                              seed=derive_seed(seed, "conn", "II"))
    return assemble_network([pop], [block])


def build_ping(n_e: int, n_i: int,
               drive_e: HeterogeneitySpec | float,
               drive_i: HeterogeneitySpec | float,
               p_ei: float = 1.0, p_ie: float = 1.0,
               g_ei: float = 0.25, g_ie: float = 0.25, g_ii: float = 0.0,
               tau_inh: float = TAU_INHIBITION_FAST_MS,
               tau_exc: float = TAU_EXCITATION_MS,
               seed: int = 0,
               e_spec: NeuronSpec | None = None,
               i_spec: NeuronSpec | None = None,
               rule_ei: ConnectivityRule | None = None,
               rule_ie: ConnectivityRule | None = None,
               check_drives: bool = True) -> NetworkSystem:
    """E/I loop (pyramidal-interneuron gamma): E recruits I, I paces E.

    I cells are meant to sit below rheobase so the rhythm's timing comes from
    the E-cell bias; a warning is issued when the I drive would fire on its
    own (the system is then ING-like) or when the E drive cannot fire.
    Connection probabilities of 1.0 mean all-to-all; g_ii adds an optional
    I-to-I block.
    """
    e_spec = e_spec or make_excitatory_cell()
    i_spec = i_spec or make_fast_firing_interneuron()
    e_pop = Population.build("E", n_e, e_spec, drive_e)
    i_pop = Population.build("I", n_i, i_spec, drive_i)

    if check_drives and e_spec.kind == "conductance":
        rheo_i = rheobase(i_spec)
        rheo_e = rheobase(e_spec)
        if np.mean(i_pop.drive) >= rheo_i:
            warnings.warn(
                f"I-cell mean drive {np.mean(i_pop.drive):.3g} is above rheobase "
                f"{rheo_i:.3g}; the rhythm will be ING-like", stacklevel=2)
        if np.mean(e_pop.drive) < rheo_e:
            warnings.warn(
                f"E-cell mean drive {np.mean(e_pop.drive):.3g} is below rheobase "
                f"{rheo_e:.3g}; the E population will not fire", stacklevel=2)

    def rule_for(p, override):
        if override is not None:
            return override
        return AllToAll() if p >= 1.0 else Bernoulli(p)

    syn_ei = SynapseSpec(g_ei, EXCITATORY_REVERSAL_MV, tau_exc)
    syn_ie = SynapseSpec(g_ie, INHIBITORY_REVERSAL_MV, tau_inh)
    blocks = [
        ConnectivityBlock("E", "I", rule_for(p_ei, rule_ei), syn_ei,
                          seed=derive_seed(seed, "conn", "EI")),
        ConnectivityBlock("I", "E", rule_for(p_ie, rule_ie), syn_ie,
                          seed=derive_seed(seed, "conn", "IE")),
    ]
    if g_ii > 0:
        syn_ii = SynapseSpec(g_ii, INHIBITORY_REVERSAL_MV, tau_inh)
        blocks.append(ConnectivityBlock("I", "I", AllToAll(), syn_ii,
                                        seed=derive_seed(seed, "conn", "II")))
    return assemble_network([e_pop, i_pop], blocks)
