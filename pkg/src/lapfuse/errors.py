"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4. Everything else is a plain bug and propagates.
"""


class LapfuseError(Exception):
    """Base class for all package errors."""


class ConfigError(LapfuseError):
    """Invalid or inconsistent run configuration."""


class DataError(LapfuseError):
    """Problem with input data (files, shapes, labels, capacity)."""


class IdxFormatError(DataError):
    """IDX file has a bad magic number or truncated payload."""


class StructuralError(DataError):
    """Structurally inconsistent data (count mismatch, out-of-range label)."""


class CapacityError(DataError):
    """Not enough items available to satisfy a request."""

    def __init__(self, message: str, available: int, requested: int):
        super().__init__(message)
        self.available = available
        self.requested = requested


class NumericalError(LapfuseError):
    """Numerical failure (factorization breakdown, divergence)."""


class TrainingError(NumericalError):
    """Loss became non-finite during optimization."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
