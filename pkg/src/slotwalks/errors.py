"""Exception types shared across the package.

The CLI maps these onto process exit codes: usage problems exit 1,
data/format/config problems exit 2, numeric failures exit 3.
"""


class ShapeError(ValueError):
    """Matrix dimensions do not satisfy an operation's contract."""


class ConfigError(ValueError):
    """A configuration value is outside its legal range."""


class DegenerateInputError(ValueError):
    """Input is numerically unusable (zero row, non-finite entries)."""


class DataFormatError(ValueError):
    """An on-disk artifact violates its binary or text format."""


class CompatibilityError(DataFormatError):
    """A checkpoint does not match the configuration it is used with."""


class UndefinedMetricError(ValueError):
    """A metric has no defined value for the given inputs."""


class TrainingDivergenceError(RuntimeError):
    """Training produced non-finite losses or gradients."""
