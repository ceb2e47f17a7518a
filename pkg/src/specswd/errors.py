"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class DataError(ValueError):
    """Input data violates a precondition (labels, splits, empty sets)."""


class DegenerateInputError(ValueError):
    """Input is degenerate for the requested operation, e.g. an all-zero tensor."""


class EvaluationError(ArithmeticError):
    """A function evaluated to a non-finite value."""


class TrainingAborted(RuntimeError):
    """Raised when an optimizer step would consume a non-finite gradient."""
