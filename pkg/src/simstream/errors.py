"""Exception types shared across the package."""

from __future__ import annotations


class SimStreamError(Exception):
    """Base class for all package errors."""


class NonFiniteState(SimStreamError):
    """Integration or rollout produced a non-finite state.

    Carries the finite prefix of the trajectory (``partial``) and the step
    index at which the first non-finite component appeared.
    """

    def __init__(self, message: str, partial=None, step: int | None = None):
        super().__init__(message)
        self.partial = partial
        self.step = step


class EmptyPilot(SimStreamError):
    """Standardization requested on an empty pilot set."""


class MalformedFrame(SimStreamError):
    """Wire frame could not be decoded (bad tag, bad length, truncation)."""


class ProtocolViolation(SimStreamError):
    """Message sequence broke the per-connection protocol contract."""


class EmptyBatch(SimStreamError):
    """Statistics requested on an empty batch."""


class ShapeMismatch(SimStreamError):
    """Array arguments have incompatible shapes."""


class NonFiniteGradient(SimStreamError):
    """Optimizer received a non-finite gradient; the run has diverged."""


class DataStarvation(SimStreamError):
    """Online trainer blocked past its timeout with no data arriving."""


class SpawnFailure(SimStreamError):
    """A simulation client could not be started."""


class ServerUnreachable(SimStreamError):
    """The ingestion server did not accept connections."""


class LengthMismatch(SimStreamError):
    """Predicted and reference sequences differ in length."""


class MissingData(SimStreamError):
    """Expected run artifacts (CSV files) were not found."""


class ConfigError(SimStreamError):
    """Experiment configuration is invalid or contains unknown keys."""
