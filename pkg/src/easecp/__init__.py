"""easecp: adaptive conformal prediction with ease-based uniform-mass binning.

Builds prediction sets (classification) and intervals (regression) from
precomputed model outputs, estimates per-example ease from predictions on
transformed inputs, calibrates either a single split-conformal threshold or
per-difficulty-bin Mondrian thresholds, and evaluates adaptivity with
binned coverage-violation and set-size metrics.
"""

__version__ = "0.1.0"

from .backend import BACKEND_NAME
from .data import PredictionOutput, RegressionDataset, ScoreDataset
from .errors import (
    CalibrationError,
    ConfigError,
    FormatError,
    MetricError,
    ToolkitError,
    ValidationError,
)

__all__ = [
    "__version__",
    "BACKEND_NAME",
    "ScoreDataset",
    "RegressionDataset",
    "PredictionOutput",
    "ToolkitError",
    "ValidationError",
    "FormatError",
    "CalibrationError",
    "MetricError",
    "ConfigError",
]
