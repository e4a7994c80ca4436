"""Synthetic harmonic series, CSV ingestion and train/val/test windowing."""

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Literal, Sequence

import numpy as np

from .core import ForecastTask, TimeSeries, forward_fill
from .exceptions import (
    AllMissingError,
    ConfigError,
    DataError,
    ParseError,
    SchemaError,
    SeriesTooShortError,
)
from .utils import derive_rng

logger = logging.getLogger(__name__)

DEFAULT_SCHEMA = ("series_id", "timestamp", "value")


@dataclass(frozen=True)
class HarmonicParams:
    """Parameters of the two-timescale harmonic generator.

    s_t = (A1 + B1 t) sin(2 pi t / T1 + phi1) + (A2 + B2 t) sin(2 pi t / T2 + phi2)
    for t = 1..T.
    """
    A1: float
    A2: float
    B1: float
    B2: float
    T1: float
    T2: float
    phi1: float
    phi2: float
    T: int

    def __post_init__(self):
        if self.T < 2 or self.T1 <= 0 or self.T2 <= 0:
            raise DataError(f"Invalid harmonic parameters: T={self.T}, T1={self.T1}, T2={self.T2}.")


@dataclass(frozen=True)
class SplitCounts:
    train: int
    val: int
    test: int

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0:
            raise ConfigError(f"Split counts must be non-negative, got {self}.")

    @property
    def total(self) -> int:
        return self.train + self.val + self.test


@dataclass(frozen=True)
class DatasetSpec:
    """How a dataset is sourced and cut into forecast tasks.

    For `synthetic` sources the counts are numbers of generated series (one
    window each). For `csv` sources they are windows sampled per series and
    split, which is how per-station sampling is expressed.
    """
    name: str
    source: Literal["synthetic", "csv"]
    input_len: int
    horizon: int
    counts: SplitCounts
    seed: int = 42
    window_len: int | None = None
    path: str | None = None
    boundary: int | str | None = None
    learning_rate: float | None = None
    threshold_fraction: float | None = None
    schema: tuple[str, str, str] = field(default=DEFAULT_SCHEMA)

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"Dataset '{self.name}': unknown source '{self.source}'.")
        if self.input_len < 2 or self.horizon < 1:
            raise ConfigError(f"Dataset '{self.name}': input_len must be >= 2 and horizon >= 1.")
        expected = self.input_len + self.horizon
        if self.window_len is None:
            object.__setattr__(self, "window_len", expected)
        elif self.window_len != expected:
            raise ConfigError(
                f"Dataset '{self.name}': window_len {self.window_len} != input_len + horizon ({expected})."
            )
        if self.source == "csv" and not self.path:
            raise ConfigError(f"Dataset '{self.name}': csv source requires a path.")


@dataclass
class TaskSplits:
    train: list[ForecastTask]
    val: list[ForecastTask]
    test: list[ForecastTask]
    skipped: list[str] = field(default_factory=list)

    def sizes(self) -> dict[str, int]:
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test)}


# --- Synthetic generator ---

def sample_harmonic_params(rng: np.random.Generator, T: int) -> HarmonicParams:
    """Draws one parameter set for a length-T harmonic series.

    Periods drawn from their normal distributions are redrawn until positive.
    """
    if T < 2:
        raise DataError(f"Harmonic series length must be >= 2, got {T}.")
    A1, A2 = rng.normal(1.0, 0.5, size=2)
    B1, B2 = rng.uniform(-1.0 / T, 1.0 / T, size=2)
    T1 = _positive_normal(rng, T / 5, T / 10)
    T2 = _positive_normal(rng, T, T / 2)
    phi1, phi2 = rng.uniform(0.0, 2 * math.pi, size=2)
    return HarmonicParams(
        float(A1), float(A2), float(B1), float(B2), T1, T2, float(phi1), float(phi2), int(T)
    )


def _positive_normal(rng: np.random.Generator, mean: float, std: float) -> float:
    while True:
        value = float(rng.normal(mean, std))
        if value > 0:
            return value


def synth_series(params: HarmonicParams, series_id: str = "synthetic") -> TimeSeries:
    """Evaluates the harmonic generator at t = 1..T."""
    t = np.arange(1, params.T + 1, dtype=np.float64)
    s = (params.A1 + params.B1 * t) * np.sin(2 * np.pi * t / params.T1 + params.phi1) + (
        params.A2 + params.B2 * t
    ) * np.sin(2 * np.pi * t / params.T2 + params.phi2)
    return TimeSeries(series_id, s, np.zeros(params.T, dtype=bool), tuple(range(1, params.T + 1)))


def generate_synthetic(spec: DatasetSpec) -> list[TimeSeries]:
    """Generates counts.total harmonic series of length window_len.

    Series i draws from its own stream derived from (seed, i), so any subset
    can be regenerated independently.
    """
    series = []
    for index in range(spec.counts.total):
        params = sample_harmonic_params(derive_rng(spec.seed, index), spec.window_len)
        series.append(synth_series(params, series_id=f"{spec.name}-{index:06d}"))
    logger.info("Generated %d synthetic series of length %d for '%s'.", len(series), spec.window_len, spec.name)
    return series


# --- CSV ingestion ---

def _parse_timestamp(raw: str, line_number: int) -> int | str:
    text = raw.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return date.fromisoformat(text).isoformat()
    except ValueError as e:
        raise ParseError(f"Invalid timestamp '{raw}' (expected integer or ISO-8601 date).", line_number, e)


def _timestamp_key(ts: int | str):
    return ts if isinstance(ts, int) else date.fromisoformat(ts)


def ingest_csv(path: str | os.PathLike, schema: Sequence[str] = DEFAULT_SCHEMA) -> list[TimeSeries]:
    """Reads a long-format CSV into one TimeSeries per series id.

    Args:
        path: UTF-8 CSV with a header row.
        schema: Column names for (series id, timestamp, value).

    Returns:
        Series in order of first appearance, each sorted by timestamp. Empty
        value cells are marked missing.

    Raises:
        SchemaError: If any schema column is absent from the header.
        ParseError: If a timestamp or value cell is malformed (with its line number).
    """
    id_col, ts_col, value_col = schema
    rows_by_id: dict[str, list[tuple]] = {}
    logger.debug("Ingesting CSV %s with schema %s", path, schema)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [col for col in schema if col not in header]
        if missing:
            logger.warning("CSV %s is missing columns: %s", path, missing)
            raise SchemaError(missing)

        for row in reader:
            line_number = reader.line_num
            series_id = (row.get(id_col) or "").strip()
            if not series_id:
                raise ParseError("Empty series_id.", line_number)
            timestamp = _parse_timestamp(row.get(ts_col) or "", line_number)
            cell = (row.get(value_col) or "").strip()
            if cell == "":
                value = None
            else:
                try:
                    value = float(cell)
                except ValueError as e:
                    raise ParseError(f"Invalid value '{cell}'.", line_number, e)
            rows_by_id.setdefault(series_id, []).append((timestamp, value, line_number))

    series = []
    for series_id, rows in rows_by_id.items():
        kinds = {type(ts) for ts, _, _ in rows}
        if len(kinds) > 1:
            raise ParseError(f"Series '{series_id}' mixes integer and date timestamps.", rows[0][2])
        rows.sort(key=lambda r: _timestamp_key(r[0]))
        series.append(TimeSeries.from_values(series_id, [v for _, v, _ in rows], [ts for ts, _, _ in rows]))
    logger.info("Ingested %d series from %s.", len(series), path)
    return series


def write_series_csv(series: Iterable[TimeSeries], path: str | os.PathLike) -> None:
    """Writes series in the ingestion format; missing values become empty cells."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(DEFAULT_SCHEMA)
        for s in series:
            stamps = s.timestamps or tuple(range(1, len(s) + 1))
            for ts, value, missing in zip(stamps, s.values, s.missing_mask):
                writer.writerow([s.id, ts, "" if missing else repr(float(value))])


def load_series(spec: DatasetSpec) -> list[TimeSeries]:
    """Materializes the raw series of a dataset (generated or ingested)."""
    if spec.source == "synthetic":
        return generate_synthetic(spec)
    return ingest_csv(spec.path, spec.schema)


# --- Windowing ---

def _boundary_index(series: TimeSeries, boundary: int | str) -> int:
    """Index of the first observation at or after `boundary`."""
    if series.timestamps is None:
        if not isinstance(boundary, int):
            raise DataError(f"Series '{series.id}' has no timestamps to compare with {boundary!r}.")
        return min(max(boundary, 0), len(series))
    key = _timestamp_key(boundary)
    try:
        return next(
            (i for i, ts in enumerate(series.timestamps) if _timestamp_key(ts) >= key), len(series)
        )
    except TypeError as e:
        raise DataError(
            f"Series '{series.id}': boundary {boundary!r} and timestamps have different kinds.", e
        )


def _sample_offsets(rng: np.random.Generator, lo: int, hi: int, window: int, count: int, series_id: str) -> list[int]:
    """Draws `count` window starts uniformly from [lo, hi - window]."""
    if count == 0:
        return []
    positions = hi - lo - window + 1
    if positions <= 0:
        raise SeriesTooShortError(
            f"Series '{series_id}': region [{lo}, {hi}) holds no window of length {window}."
        )
    offsets = rng.choice(positions, size=count, replace=count > positions)
    return sorted(int(lo + o) for o in offsets)


def _window_task(series: TimeSeries, start: int, spec: DatasetSpec) -> ForecastTask:
    stop = start + spec.window_len
    values = series.values[start:stop]
    task = ForecastTask.from_window(
        values[: spec.input_len], values[spec.input_len:], series_id=series.id, start=start
    )
    if series.timestamps is not None:
        task.metadata["timestamps"] = series.timestamps[start:stop]
    return task


def make_tasks(series: Sequence[TimeSeries], spec: DatasetSpec, seed: int | None = None) -> TaskSplits:
    """Cuts series into train/val/test forecast tasks.

    Synthetic datasets assign whole series to splits in order (train, val,
    test). CSV datasets sample `counts` windows per series per split at random
    offsets; with a boundary, train/val windows end before it and test windows
    start at or after it.

    Series that are too short (or entirely missing) are skipped and logged.
    """
    seed = spec.seed if seed is None else seed
    splits = TaskSplits([], [], [])

    if spec.source == "synthetic":
        buckets = (
            [splits.train] * spec.counts.train + [splits.val] * spec.counts.val + [splits.test] * spec.counts.test
        )
        for index, (s, bucket) in enumerate(zip(series, buckets)):
            try:
                s = _prepare(s, spec.window_len)
                (start,) = _sample_offsets(derive_rng(seed, index, 1), 0, len(s), spec.window_len, 1, s.id)
            except (SeriesTooShortError, AllMissingError) as e:
                logger.warning("Skipping series '%s': %s", s.id, e)
                splits.skipped.append(s.id)
                continue
            bucket.append(_window_task(s, start, spec))
    else:
        for index, s in enumerate(series):
            rng = derive_rng(seed, index)
            try:
                cut = len(s) if spec.boundary is None else _boundary_index(s, spec.boundary)
                s = _prepare(s, spec.window_len, cut)
                test_lo = 0 if spec.boundary is None else cut
                offsets = (
                    _sample_offsets(rng, 0, cut, spec.window_len, spec.counts.train, s.id),
                    _sample_offsets(rng, 0, cut, spec.window_len, spec.counts.val, s.id),
                    _sample_offsets(rng, test_lo, len(s), spec.window_len, spec.counts.test, s.id),
                )
            except (SeriesTooShortError, AllMissingError) as e:
                logger.warning("Skipping series '%s': %s", s.id, e)
                splits.skipped.append(s.id)
                continue
            for bucket, starts in zip((splits.train, splits.val, splits.test), offsets):
                bucket.extend(_window_task(s, start, spec) for start in starts)

    logger.info(
        "Dataset '%s' tasks: %s (skipped %d series).", spec.name, splits.sizes(), len(splits.skipped)
    )
    return splits


def _prepare(series: TimeSeries, window_len: int, cut: int | None = None) -> TimeSeries:
    """Forward-fills a series; gaps before `cut` are filled from positions before `cut` only."""
    if len(series) < window_len:
        raise SeriesTooShortError(f"length {len(series)} < window length {window_len}")
    filled = forward_fill(series)
    if cut is None or not 0 < cut < len(series):
        return filled
    head = forward_fill(TimeSeries(series.id, series.values[:cut], series.missing_mask[:cut]))
    values = np.concatenate([head.values, filled.values[cut:]])
    return TimeSeries(series.id, values, np.zeros(len(series), dtype=bool), series.timestamps)
