"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class WgqedError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WgqedError, ValueError):
    """Invalid parameters, mismatched dimensions or inconsistent configuration."""


class StepSizeError(ConfigurationError):
    """A time step is too coarse for the first-order jump logic or the integrator."""


class DarkStateError(WgqedError):
    """A collapse was requested on a channel whose jump operator annihilates the state."""


class DarkChannelError(WgqedError):
    """A correlation was requested for a channel carrying zero flux."""


class NonUniqueSteadyStateError(WgqedError):
    """The generator's null space is not one dimensional."""

    def __init__(self, null_dim: int):
        super().__init__(f"non-unique steady state: null space has dimension {null_dim}")
        self.null_dim = null_dim


class EngineAbort(WgqedError):
    """A trajectory was aborted; carries the offending trajectory id."""

    def __init__(self, trajectory_id: int, reason: str):
        super().__init__(f"trajectory {trajectory_id}: {reason}")
        self.trajectory_id = trajectory_id
        self.reason = reason


class StatisticsError(WgqedError):
    """A statistic could not be formed from the supplied events."""
