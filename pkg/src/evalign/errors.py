"""Exception types shared across the package.

Each class marks one failure contract so callers and tests can catch the
specific condition instead of pattern-matching messages.
"""


class EvalignError(Exception):
    """Base class for all package errors."""


class ShapeError(EvalignError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteError(EvalignError, ValueError):
    """A tensor would contain NaN or Inf."""


class DomainError(EvalignError, ValueError):
    """Argument outside the mathematical domain of a function."""


class DegenerateInputError(EvalignError, ValueError):
    """Input is degenerate for the operation (e.g. near-zero norm)."""


class ContractError(EvalignError, ValueError):
    """A documented precondition was violated."""


class VocabularyError(EvalignError, ValueError):
    """Token id outside the configured vocabulary."""


class StratificationError(EvalignError, ValueError):
    """A class has too few samples to stratify across the requested splits."""


class CheckpointError(EvalignError, ValueError):
    """Checkpoint file is corrupt or does not match the expected config."""


class TrainingDivergedError(EvalignError, RuntimeError):
    """Training loss became non-finite."""


class UndefinedMetricError(EvalignError, ValueError):
    """Metric is undefined for the given input (single class, zero variance)."""


class ProtocolError(EvalignError, ValueError):
    """Study protocol violation (e.g. round 2 before round 1 completes)."""


class ValidationError(EvalignError, ValueError):
    """Submitted payload failed validation."""


class ConflictError(EvalignError, ValueError):
    """Duplicate submission for an already-answered key."""


class ConfigError(EvalignError, ValueError):
    """Unknown or invalid configuration key/value."""
