"""Deterministic simulation and analysis of neuronal rhythm dynamics."""

__version__ = "0.1.0"

from .cells import (
    GateSpec,
    CurrentSpec,
    NeuronSpec,
    RateFn,
    SynapseSpec,
    eval_gate,
    ionic_current,
    make_excitatory_cell,
    make_fast_firing_interneuron,
    make_theta_cell,
    resting_state,
)
from .engine import (
    ConfigurationError,
    NumericalBlowupError,
    RecordingOptions,
    SimulationResult,
    UnderResolvedError,
    derivative,
    detect_spikes,
    integrate_theta_forced,
    rk4_step,
    simulate,
)
from .network import (
    AllToAll,
    Bernoulli,
    ConnectivityBlock,
    FixedInDegree,
    HeterogeneitySpec,
    NetworkSystem,
    NoiseSource,
    Population,
    StimulusTrain,
    assemble_network,
    build_ing,
    build_ping,
    classify_regime,
    rheobase,
    sample_connectivity,
)

__all__ = [name for name in dir() if not name.startswith("_")]
