"""
XCOM Error Hierarchy
====================
Exceptions raised by the protocol library and the simulator.

Recoverable link conditions (tx backpressure, rx overflow, filtered frames,
START while running) are *not* exceptions; they are trace records and
counters. Everything here aborts the operation that raised it.
"""

from typing import Iterable, Optional


class XcomError(Exception):
    """Base class for all XCOM library errors."""


class ConfigError(XcomError, ValueError):
    """Invalid run configuration or topology parameter."""


class FrameError(XcomError, ValueError):
    """Base class for wire-format errors."""


class InvalidCommandError(FrameError):
    """Command nibble is in the reserved range 0x8-0xF."""


class MalformedFrameError(FrameError):
    """Bit vector length does not match the decoded command."""


class FrameEncodingError(FrameError):
    """Frame fields out of range for their wire width."""


class ScriptParseError(XcomError):
    """Scenario program text could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ScriptRuntimeError(XcomError):
    """A board program performed an illegal operation while running."""


class SimulationFault(XcomError):
    """Internal engine fault (e.g. retro-causal scheduling). Aborts the run."""


class AutoIdError(XcomError):
    """AUTO-ID did not converge within the retry limit."""


class SyncError(XcomError):
    """Clock synchronization was refused or did not complete."""


class MeasurementError(XcomError):
    """A trace measurement is missing required events."""

    def __init__(self, message: str, missing: Iterable[int] = ()):
        self.missing = sorted(missing)
        if self.missing:
            message = f"{message} (missing boards: {self.missing})"
        super().__init__(message)


class LatencyDeviationError(XcomError):
    """Observed message latencies were not all identical."""


class DriftError(XcomError):
    """Pulse skew changed over the stability horizon."""
