"""Point-forecast accuracy metrics and their aggregation.

All functions are pure and sum in index order so repeated evaluations are
bit-identical.
"""

import enum
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ConfigError, DegenerateDenominatorError, LengthMismatchError, MetricError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MetricInput:
    """Raw-unit context, horizon ground truth and horizon forecast of one task."""
    context: np.ndarray
    actual: np.ndarray
    forecast: np.ndarray

    def __post_init__(self):
        for name in ("context", "actual", "forecast"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))
        if self.actual.size != self.forecast.size:
            raise LengthMismatchError(
                f"actual has {self.actual.size} steps but forecast has {self.forecast.size}."
            )

    @property
    def last_observed(self) -> float:
        if self.context.size == 0:
            raise MetricError("Sign accuracy needs a non-empty context.")
        return float(self.context[-1])


class SignClass(enum.IntEnum):
    UP = 1
    FLAT = 2
    DOWN = 3


@dataclass(frozen=True)
class SignConfig:
    """threshold = threshold_fraction * population std of the raw context."""
    threshold_fraction: float = 0.0

    def __post_init__(self):
        if not self.threshold_fraction >= 0:
            raise ConfigError(f"threshold_fraction must be >= 0, got {self.threshold_fraction}.")

    def threshold(self, context) -> float:
        if self.threshold_fraction == 0:
            return 0.0
        return self.threshold_fraction * float(np.std(np.asarray(context, dtype=np.float64)))


def smape(data: MetricInput) -> float:
    """Mean of |x - f| / ((|x| + |f|) / 2) over the horizon, in [0, 2].

    A step where actual and forecast are both zero contributes 0.
    """
    if data.actual.size == 0:
        raise LengthMismatchError("SMAPE needs at least one horizon step.")
    numerator = np.abs(data.actual - data.forecast)
    denominator = (np.abs(data.actual) + np.abs(data.forecast)) / 2.0
    terms = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=denominator != 0)
    return float(np.mean(terms))


def mase(data: MetricInput) -> float:
    """Forecast MAE over the in-sample MAE of the one-step naive forecast.

    Raises:
        DegenerateDenominatorError: If the context is constant (or shorter than 2).
    """
    if data.context.size < 2:
        raise DegenerateDenominatorError(f"MASE needs a context of length >= 2, got {data.context.size}.")
    if data.actual.size == 0:
        raise LengthMismatchError("MASE needs at least one horizon step.")
    scale = float(np.mean(np.abs(np.diff(data.context))))
    if scale == 0:
        raise DegenerateDenominatorError("In-sample naive MAE is zero (constant context).")
    return float(np.mean(np.abs(data.actual - data.forecast))) / scale


def sign_class(last_observed: float, value: float, threshold: float = 0.0) -> SignClass:
    """UP if value - last > threshold, DOWN if < -threshold, FLAT otherwise."""
    if threshold < 0:
        raise MetricError(f"Sign threshold must be >= 0, got {threshold}.")
    delta = value - last_observed
    if delta > threshold:
        return SignClass.UP
    if delta < -threshold:
        return SignClass.DOWN
    return SignClass.FLAT


def _sign_classes(delta: np.ndarray, threshold: float) -> np.ndarray:
    return np.where(delta > threshold, SignClass.UP, np.where(delta < -threshold, SignClass.DOWN, SignClass.FLAT))


def sign_agreements(data: MetricInput, cfg: SignConfig) -> tuple[int, int]:
    """(agreeing steps, total steps) for one task."""
    last = data.last_observed
    threshold = cfg.threshold(data.context)
    predicted = _sign_classes(data.forecast - last, threshold)
    observed = _sign_classes(data.actual - last, threshold)
    return int(np.sum(predicted == observed)), int(data.actual.size)


def sign_accuracy(inputs: Iterable[MetricInput], cfg: SignConfig) -> float:
    """Fraction of (task, horizon step) pairs whose forecast and actual classes agree."""
    agree = total = 0
    for data in inputs:
        a, n = sign_agreements(data, cfg)
        agree += a
        total += n
    if total == 0:
        raise MetricError("sign_accuracy needs at least one task with a horizon step.")
    return agree / total


@dataclass(frozen=True)
class Aggregate:
    """Mean and population std; both None when nothing was aggregated."""
    mean: float | None
    std: float | None
    count: int
    excluded: int = 0

    def format(self, digits: int = 3) -> str:
        if self.mean is None:
            return f"undefined (excluded {self.excluded})"
        return f"{self.mean:.{digits}f} ± {self.std:.{digits}f}"


def aggregate(values: Sequence[float | None], excluded: int = 0) -> Aggregate:
    """Aggregates per-task values; None or non-finite entries count as excluded."""
    kept = [float(v) for v in values if v is not None and math.isfinite(v)]
    excluded += len(values) - len(kept)
    if not kept:
        return Aggregate(None, None, 0, excluded)
    arr = np.asarray(kept, dtype=np.float64)
    return Aggregate(float(np.mean(arr)), float(np.std(arr)), len(kept), excluded)


def per_task_scores(inputs: Sequence[MetricInput]) -> tuple[list[float], list[float | None]]:
    """SMAPE and MASE per task; MASE is None where its denominator vanishes."""
    smapes, mases = [], []
    for data in inputs:
        smapes.append(smape(data))
        try:
            mases.append(mase(data))
        except DegenerateDenominatorError:
            mases.append(None)
    skipped = sum(m is None for m in mases)
    if skipped:
        logger.info("MASE undefined for %d of %d tasks (constant context).", skipped, len(inputs))
    return smapes, mases
