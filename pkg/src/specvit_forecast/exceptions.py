"""Custom exception classes for specvit-forecast."""

from typing import Sequence


class SpecVitError(Exception):
    """Base class for exceptions in this application."""
    def __init__(self, message: str, original_exception: Exception | None = None):
        super().__init__(message)
        self.original_exception = original_exception


class ConfigError(SpecVitError):
    """Raised for an invalid experiment configuration (bad key, value or file)."""
    pass


# --- Data ingestion and preprocessing ---

class DataError(SpecVitError):
    """Base class for problems with input series or datasets."""
    pass

class AllMissingError(DataError):
    """Raised when a series has no observed value to fill from."""
    pass

class ParseError(DataError):
    """Raised when a CSV cell cannot be parsed."""
    def __init__(self, message: str, line_number: int, original_exception: Exception | None = None):
        super().__init__(f"line {line_number}: {message}", original_exception)
        self.line_number = line_number

class SchemaError(DataError):
    """Raised when required CSV columns are absent."""
    def __init__(self, missing_columns: Sequence[str]):
        super().__init__(f"Missing required columns: {', '.join(missing_columns)}.")
        self.missing_columns = list(missing_columns)

class SeriesTooShortError(DataError):
    """Raised when a series cannot hold a single forecast window."""
    pass

class EmptyDatasetError(DataError):
    """Raised when a dataset split ends up without any task."""
    pass


# --- Imaging and metrics input validation ---

class LengthMismatchError(SpecVitError):
    """Raised when paired sequences (strip/spectrogram, actual/forecast) differ in length."""
    pass

class OutOfRangeError(SpecVitError):
    """Raised when scaled values fall outside [0, 1]."""
    pass


# --- Tensor kernel and model ---

class ModelError(SpecVitError):
    """Base class for tensor, layer and checkpoint failures."""
    pass

class ShapeMismatchError(ModelError):
    """Raised when operand shapes are incompatible for an op."""
    pass

class NotScalarError(ModelError):
    """Raised when backward() is called on a non-scalar tensor."""
    pass

class BadShapeError(ModelError):
    """Raised when an image does not match the model's configured input shape."""
    pass

class CheckpointError(ModelError):
    """Base class for checkpoint read/write failures."""
    pass

class CheckpointFormatError(CheckpointError):
    """Raised for a corrupt or unsupported checkpoint file."""
    pass

class CheckpointMismatchError(CheckpointError):
    """Raised when a checkpoint's architecture hash does not match the configuration."""
    pass


class TrainingDivergenceError(SpecVitError):
    """Raised when training cannot continue."""
    pass

class NonFiniteLossError(TrainingDivergenceError):
    """Raised when a mini-batch loss is NaN or infinite."""
    def __init__(self, batch_index: int, epoch: int, loss: float):
        super().__init__(f"Non-finite loss {loss!r} at epoch {epoch}, batch {batch_index}.")
        self.batch_index = batch_index
        self.epoch = epoch


# --- Statistical baselines ---

class ForecastError(SpecVitError):
    """Base class for baseline fitting failures."""
    pass

class InsufficientDataError(ForecastError):
    """Raised when a context is too short for the requested model order."""
    pass

class NonStationaryError(ForecastError):
    """Raised when fitted AR coefficients lie outside the stationarity region."""
    pass

class NonInvertibleError(ForecastError):
    """Raised when fitted MA coefficients lie outside the invertibility region."""
    pass

class SingularFitError(ForecastError):
    """Raised when the optimizer does not produce a usable fit."""
    pass


class MetricError(SpecVitError):
    """Base class for metric evaluation failures."""
    pass

class DegenerateDenominatorError(MetricError):
    """Raised when the MASE in-sample naive error is zero."""
    pass
