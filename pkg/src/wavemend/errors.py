"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2 (usage),
DimensionError / DataError / VolumeFileError -> 3 (data),
NumericError -> 4 (numeric failure).
"""


class DimensionError(ValueError):
    """Shape, size, or index-bound violation."""


class VolumeFileError(ValueError):
    """Malformed volume file: bad header, payload size, or non-finite data."""


class DataError(ValueError):
    """Dataset problem: missing pairs, inconsistent shapes."""


class ConfigError(ValueError):
    """Inconsistent or unusable run configuration."""


class NumericError(ArithmeticError):
    """A computation produced non-finite results."""
