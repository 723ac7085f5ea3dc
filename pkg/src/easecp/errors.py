"""Exception hierarchy shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all easecp errors."""


class ValidationError(ToolkitError):
    """A dataset or configuration violates an invariant.

    Messages name the offending row/label/bin index where applicable.
    """


class FormatError(ToolkitError):
    """A file on disk does not match the expected format."""


class CalibrationError(ToolkitError):
    """Calibration cannot proceed (e.g. an empty or undersized bin)."""


class MetricError(ToolkitError):
    """A metric is undefined for the given input (e.g. constant vectors)."""


class ConfigError(ToolkitError):
    """An operation was configured inconsistently."""
