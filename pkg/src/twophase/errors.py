"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class TwoPhaseError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(TwoPhaseError, ValueError):
    """Array dimensions do not match what an operation requires."""


class ParameterError(TwoPhaseError, ValueError):
    """A parameter is outside its admissible range."""


class ConfigError(TwoPhaseError, ValueError):
    """Inconsistent configuration (missing column, dimension mismatch between parts)."""


class FormatError(TwoPhaseError, ValueError):
    """A file could not be parsed."""


class InsufficientDataError(TwoPhaseError, ValueError):
    pass


class EstimationError(TwoPhaseError, ValueError):
    pass


class EvaluationError(TwoPhaseError, ValueError):
    pass


class ConvergenceError(TwoPhaseError, RuntimeError):
    pass


class TrainingError(TwoPhaseError, RuntimeError):
    """Training diverged (non-finite loss)."""


class ContractError(TwoPhaseError, RuntimeError):
    """An API was used out of order, e.g. backward with a stale forward cache."""
