"""Quantum-jump simulation and photon-counting statistics for qubits in a waveguide."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (ConfigurationError, DarkChannelError, DarkStateError, EngineAbort,
                     NonUniqueSteadyStateError, StatisticsError, StepSizeError, WgqedError)
from .model import (OneQubitParams, TwoQubitParams, build_one_qubit, build_two_qubit)
from .trajectory import TrajectoryConfig, run_ensemble, run_trajectory, simulate_events

__all__ = [
    "ConfigurationError",
    "DarkChannelError",
    "DarkStateError",
    "EngineAbort",
    "NonUniqueSteadyStateError",
    "OneQubitParams",
    "StatisticsError",
    "StepSizeError",
    "TrajectoryConfig",
    "TwoQubitParams",
    "WgqedError",
    "__version__",
    "build_one_qubit",
    "build_two_qubit",
    "run_ensemble",
    "run_trajectory",
    "simulate_events",
]
