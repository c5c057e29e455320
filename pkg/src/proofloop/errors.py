"""Exception types shared across the package."""

from __future__ import annotations


class ProofloopError(Exception):
    """Base class for every error raised deliberately by this package."""


class ContractViolationError(ProofloopError):
    """A caller fed a function input that its contract forbids."""


class TransitionError(ProofloopError):
    """An event arrived that is illegal in the current pipeline step."""


class ConfigError(ProofloopError):
    """A configuration value is out of range or unusable."""


class PromptError(ProofloopError):
    """A prompt template could not be loaded or rendered."""


class NothingToCorrectError(PromptError):
    """Correction was requested for a report that leaves nothing to fix."""


class PlaceholderCollisionWarning(UserWarning):
    """Substituted content itself contained a placeholder token."""


class BackendError(ProofloopError):
    """Base class for model-backend failures."""


class TransientBackendError(BackendError):
    """Retryable failure: timeout, rate-limit response, or 5xx."""


class AuthBackendError(BackendError):
    """Credentials rejected; retrying will not help."""


class BackendExhaustedError(BackendError):
    """All retry attempts were spent without a successful response."""


class ScriptMismatchError(BackendError):
    """A scripted response was keyed to a different step than the request."""


class ScriptExhaustedError(BackendError):
    """The scripted backend ran out of entries and was told to fail."""


class BackpressureError(BackendError):
    """The rate-limiter queue is full; the call was refused, not queued."""


class LogError(ProofloopError):
    """An event log could not be read or written."""


class ResumeRefusedError(LogError):
    """The event log is damaged; resuming would risk silent divergence."""


class ReviewError(ProofloopError):
    """A review action could not be applied."""


class ReviewConflictError(ReviewError):
    """The run is not in a state that allows the requested review action."""
