"""Exception hierarchy shared by every prunekit module."""

from __future__ import annotations


class PrunekitError(Exception):
    """Base class for all errors raised by this package."""


# --- instance / core validation ---------------------------------------------


class ValidationError(PrunekitError):
    pass


class EmptyReasoning(ValidationError):
    pass


class EmptyAnswer(ValidationError):
    pass


class DuplicateId(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class RhoBelowTrace(PrunekitError):
    """Requested keep fraction is deeper than the trace was executed."""


# --- backends ----------------------------------------------------------------


class BackendFailure(PrunekitError):
    """A likelihood backend could not score a sequence.

    ``retryable`` and ``attempts`` carry retry metadata for remote backends.
    """

    def __init__(self, message: str, *, retryable: bool = False, attempts: int = 1):
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


class EmptyCorpus(PrunekitError):
    pass


class SequenceTooLong(BackendFailure):
    pass


class RequestTimeout(BackendFailure):
    def __init__(self, message: str, *, attempts: int = 1):
        super().__init__(message, retryable=True, attempts=attempts)


class AuthFailure(BackendFailure):
    def __init__(self, message: str):
        super().__init__(message, retryable=False)


# --- pruning -----------------------------------------------------------------


class DegenerateAnswer(PrunekitError):
    pass


class TooLarge(PrunekitError):
    """Brute-force subset search refused; n exceeds the combinatorial guard."""


class UnsupportedTrace(PrunekitError):
    """Trace lacks the per-step records an operation needs."""


# --- baselines / analysis ----------------------------------------------------


class SpanOutOfBounds(PrunekitError):
    pass


class MissingScores(PrunekitError):
    pass


class AnnotationMismatch(PrunekitError):
    pass


class MissingStepRecords(PrunekitError):
    pass


class EmptyInput(PrunekitError):
    pass


class EmptyTransition(PrunekitError):
    """No tokens are pruned between the two requested keep fractions."""


# --- surrogate ---------------------------------------------------------------


class ZeroVariance(PrunekitError):
    pass


class DegenerateTargets(PrunekitError):
    pass


# --- pipeline ----------------------------------------------------------------


class ParseError(PrunekitError):
    pass


class TraceMissing(PrunekitError):
    pass


class NoGenerationEndpoint(PrunekitError):
    pass


class ConfigError(PrunekitError):
    pass
