"""Custom exceptions for driftcast."""
from typing import Optional


class DriftcastError(Exception):
    """Base exception for driftcast errors."""


# Configuration --------------------------------------------------------------


class ConfigError(DriftcastError):
    """Raised when an experiment configuration is invalid."""


class ConfigParseError(ConfigError):
    """Raised when a config line cannot be parsed."""

    def __init__(self, line: int, detail: str = "malformed binding"):
        self.line = line
        super().__init__(f"config line {line}: {detail}")


class MissingConfig(ConfigError):
    """Raised when a named config file does not exist."""

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"config file not found: {path}")


class UnknownKey(ConfigError):
    """Raised when a config file names a key the schema does not know."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown config key: {name}")


class BadValue(ConfigError):
    """Raised when a config value fails validation."""

    def __init__(self, key: str, detail: str = ""):
        self.key = key
        super().__init__(f"bad value for {key}" + (f": {detail}" if detail else ""))


class ConfigMismatch(ConfigError):
    """Raised when two run reports are compared across different setups."""


class StrategyArgMismatch(ConfigError):
    """Raised when a strategy is started with arguments it cannot use."""


# Data -----------------------------------------------------------------------


class DataError(DriftcastError):
    """Raised when input data cannot be used."""


class MissingFile(DataError):
    """Raised when an input file does not exist."""

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"file not found: {path}")


class RaggedRows(DataError):
    """Raised when a CSV row has a different number of cells than the header."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has the wrong number of cells")


class NonNumericCell(DataError):
    """Raised when a value cell does not parse as a finite number."""

    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"non-numeric cell at row {row}, column {col}")


class EmptyData(DataError):
    """Raised when a file holds no data rows or no value columns."""


class DegenerateSplit(DataError):
    """Raised when a chronological split leaves a segment empty."""


class EmptyRange(DataError):
    """Raised when a window range contains no valid origin."""


class BadSchedule(DataError):
    """Raised when a synthetic regime schedule is inconsistent."""


class LeakageViolation(DataError):
    """Raised when a guarded stream is read past its clock."""

    def __init__(self, index: int, clock: int):
        self.index = index
        self.clock = clock
        super().__init__(f"read of index {index} beyond clock {clock}")


class MissingCheckpoint(DataError):
    """Raised when a checkpoint file is absent or unreadable."""

    def __init__(self, path: str, detail: Optional[str] = None):
        self.path = path
        super().__init__(f"checkpoint not usable: {path}" + (f" ({detail})" if detail else ""))


# Shapes ---------------------------------------------------------------------


class ShapeError(DriftcastError):
    """Base exception for tensor shape problems."""


class ShapeMismatch(ShapeError):
    """Raised when a tensor does not fit the layer it is fed to."""

    def __init__(self, layer: str, detail: str = ""):
        self.layer = layer
        super().__init__(f"shape mismatch at {layer}" + (f": {detail}" if detail else ""))


class StaleCache(ShapeError):
    """Raised when backward is called with a cache the parameters have outlived."""


class WiringMismatch(ShapeError):
    """Raised when a parameter snapshot does not fit the target model."""


class ArityMismatch(ShapeError):
    """Raised when an encoder receives per-variate vectors of the wrong length."""


class ModeDimMismatch(ShapeError):
    """Raised when an aggregation mode bound to N variates sees a different N."""


class DimMismatch(ShapeError):
    """Raised when two vectors or tensors disagree in dimension."""


class RegistryMismatch(ShapeError):
    """Raised when a coefficient generator is used with a foreign layer registry."""


class BatchArityMismatch(ShapeError):
    """Raised when coefficient sets and inputs disagree in batch size."""


# Numerics -------------------------------------------------------------------


class NumericError(DriftcastError):
    """Base exception for numerical failures."""


class Diverged(NumericError):
    """Raised when a training loss becomes non-finite."""


class ZeroDenominator(NumericError):
    """Raised when a relative gap is taken against a zero reference."""
