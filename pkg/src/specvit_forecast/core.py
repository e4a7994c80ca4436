"""Series types, preprocessing and scaling shared by every other module.

All functions here are pure: inputs are never mutated, so they can be called
from any number of workers at once.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import AllMissingError, DataError

logger = logging.getLogger(__name__)

Timestamp = int | str


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A univariate series with a missing-value mask.

    Missing positions hold NaN in `values`. `timestamps`, when present, are
    integer indices or ISO-8601 date strings aligned with `values`.
    """
    id: str
    values: np.ndarray
    missing_mask: np.ndarray
    timestamps: tuple[Timestamp, ...] | None = None

    def __post_init__(self):
        values = _frozen_array(self.values, np.float64)
        mask = _frozen_array(self.missing_mask, bool)
        if values.ndim != 1 or values.size < 1:
            raise DataError(f"Series '{self.id}' must be a non-empty 1-D sequence.")
        if mask.shape != values.shape:
            raise DataError(
                f"Series '{self.id}': missing_mask length {mask.size} != values length {values.size}."
            )
        if self.timestamps is not None and len(self.timestamps) != values.size:
            raise DataError(f"Series '{self.id}': timestamps length does not match values.")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)

    @classmethod
    def from_values(cls, series_id: str, values: Sequence[float | None], timestamps=None) -> "TimeSeries":
        """Builds a series where `None` or NaN marks a missing observation."""
        raw = np.array([np.nan if v is None else v for v in values], dtype=np.float64)
        return cls(series_id, raw, np.isnan(raw), None if timestamps is None else tuple(timestamps))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def has_missing(self) -> bool:
        return bool(self.missing_mask.any())


@dataclass(frozen=True)
class ScalingRecord:
    """Min/max of the values a scaling was computed from.

    A degenerate record (max == min) scales with unit span around 0.5 so that
    scaling stays exactly invertible.
    """
    min: float
    max: float

    def __post_init__(self):
        if not self.max >= self.min:
            raise DataError(f"ScalingRecord requires max >= min, got min={self.min}, max={self.max}.")

    @property
    def degenerate(self) -> bool:
        return self.max == self.min

    def scale(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        if self.degenerate:
            return v - self.min + 0.5
        return (v - self.min) / (self.max - self.min)

    def inverse(self, scaled) -> np.ndarray:
        s = np.asarray(scaled, dtype=np.float64)
        if self.degenerate:
            return s - 0.5 + self.min
        return s * (self.max - self.min) + self.min


@dataclass(frozen=True, eq=False)
class ForecastTask:
    """A (context, target) window plus the context-only scaling record."""
    context: np.ndarray
    target: np.ndarray
    scaling: ScalingRecord
    series_id: str = ""
    start: int = 0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "context", _frozen_array(self.context, np.float64))
        object.__setattr__(self, "target", _frozen_array(self.target, np.float64))

    @classmethod
    def from_window(cls, context, target, series_id: str = "", start: int = 0) -> "ForecastTask":
        """Builds a task whose scaling record depends on `context` only."""
        _, record = minmax_scale(context)
        return cls(np.asarray(context), np.asarray(target), record, series_id, start)

    @property
    def input_len(self) -> int:
        return int(self.context.size)

    @property
    def horizon(self) -> int:
        return int(self.target.size)

    @property
    def scaled_context(self) -> np.ndarray:
        return np.clip(self.scaling.scale(self.context), 0.0, 1.0)

    @property
    def scaled_target(self) -> np.ndarray:
        return self.scaling.scale(self.target)

    @property
    def key(self) -> str:
        return f"{self.series_id}@{self.start}"


# --- Preprocessing ---

def forward_fill(series: TimeSeries) -> TimeSeries:
    """Replaces every missing value with the most recent observed value.

    Leading gaps are backfilled from the first observation so that the series
    length never changes.

    Raises:
        AllMissingError: If the series has no observed value at all.
    """
    mask = series.missing_mask
    if not mask.any():
        return series
    observed = np.flatnonzero(~mask)
    if observed.size == 0:
        raise AllMissingError(f"Series '{series.id}' has no observed values.")

    # Index of the last observation at or before each position.
    last_seen = np.where(~mask, np.arange(mask.size), -1)
    np.maximum.accumulate(last_seen, out=last_seen)
    last_seen[last_seen < 0] = observed[0]
    filled = series.values[last_seen]
    logger.debug("Forward-filled %d missing values in series '%s'.", int(mask.sum()), series.id)
    return TimeSeries(series.id, filled, np.zeros(mask.size, dtype=bool), series.timestamps)


def minmax_scale(values) -> tuple[np.ndarray, ScalingRecord]:
    """Scales `values` linearly onto [0, 1].

    A constant input maps to 0.5 everywhere; the record then reports
    `degenerate = True`.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DataError("minmax_scale requires a non-empty input.")
    record = ScalingRecord(float(v.min()), float(v.max()))
    return record.scale(v), record


def inverse_scale(scaled, record: ScalingRecord) -> np.ndarray:
    """Maps scaled values back to original units with `record`."""
    return record.inverse(scaled)
