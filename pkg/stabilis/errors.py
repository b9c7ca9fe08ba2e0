"""
Exception hierarchy shared by all stabilis modules.
"""

from typing import Optional


class StabilisError(Exception):
    """Base class for every error raised by the pipeline."""


class SchemaError(StabilisError):
    """A column mapping does not match the input file."""


class RowError(StabilisError):
    """A single input row could not be parsed."""

    def __init__(self, message: str, row_index: int):
        super().__init__(f"row {row_index}: {message}")
        self.row_index = row_index


class EmptyLogError(StabilisError):
    """The input contains no events."""


class InputError(StabilisError):
    """Input data violates a preprocessing precondition."""


class RuleError(StabilisError):
    """A labeling rule references something the log does not have."""


class SplitError(StabilisError):
    """A train/test or train/validation split cannot be made."""


class ParameterError(StabilisError):
    """A numeric parameter is out of its allowed range."""


class EncodeError(StabilisError):
    """A prefix cannot be encoded under a fitted encoder."""


class ModelError(StabilisError):
    """A model cannot be applied to the given matrix."""

    def __init__(self, message: str, column: Optional[str] = None):
        super().__init__(message)
        self.column = column


class CalibrationError(StabilisError):
    """Calibration data is unusable."""


class MetricError(StabilisError):
    """A metric is undefined on its input."""


class SearchError(StabilisError):
    """Hyperparameter search produced no usable configuration."""
