"""Non-seasonal ARIMA fitted by conditional sum of squares, with stepwise order search.

The differenced, centered series w_t follows

    w_t = phi_1 w_{t-1} + ... + phi_p w_{t-p} + e_t + theta_1 e_{t-1} + ... + theta_q e_{t-q}

Residuals are computed from t = p onward with pre-sample errors set to zero.
For d = 0 the series mean is always estimated; for d = 1 an optional drift
(the mean of the first differences) is estimated; d = 2 carries no constant.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal

from ..exceptions import (
    ConfigError,
    DataError,
    ForecastError,
    InsufficientDataError,
    NonInvertibleError,
    NonStationaryError,
    SingularFitError,
)
from .simple import naive_forecast

logger = logging.getLogger(__name__)

MAX_P, MAX_D, MAX_Q = 5, 2, 5
MAX_FITS = 40
_MIN_EXTRA_POINTS = 10
_ROOT_MARGIN = 1e-6
_PENALTY = 1e12


@dataclass(frozen=True, order=True)
class ArimaOrder:
    p: int
    d: int
    q: int
    include_constant: bool | None = None

    def __post_init__(self):
        if not (0 <= self.p <= MAX_P and 0 <= self.d <= MAX_D and 0 <= self.q <= MAX_Q):
            raise ConfigError(f"ARIMA order ({self.p},{self.d},{self.q}) outside bounds ({MAX_P},{MAX_D},{MAX_Q}).")
        constant = self.include_constant
        if self.d == 0:
            constant = True
        elif constant is None:
            constant = False
        if constant and self.d == 2:
            raise ConfigError("ARIMA with d=2 does not support a constant term.")
        object.__setattr__(self, "include_constant", constant)

    @property
    def n_params(self) -> int:
        """Parameters counted by AIC: coefficients, innovation variance and the constant."""
        return self.p + self.q + 1 + int(self.include_constant)

    @property
    def min_length(self) -> int:
        return self.p + self.q + self.d + _MIN_EXTRA_POINTS

    def __str__(self) -> str:
        drift = " with drift" if self.include_constant and self.d == 1 else ""
        return f"ARIMA({self.p},{self.d},{self.q}){drift}"


def difference(values: np.ndarray, d: int) -> np.ndarray:
    return np.diff(values, n=d) if d else np.asarray(values, dtype=np.float64)


def select_differencing(values) -> int:
    """d in {0, 1, 2} minimizing the variance of the d-times differenced series.

    Ties keep the smaller d.
    """
    x = np.asarray(values, dtype=np.float64)
    variances = [float(np.var(difference(x, d))) for d in range(MAX_D + 1) if x.size - d >= 2]
    return int(np.argmin(variances))


def css_residuals(w: np.ndarray, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """Conditional residuals e_p..e_{n-1} of a zero-mean ARMA(p, q) series."""
    p = ar.size
    n = w.size
    u = w[p:].copy()
    for i in range(p):
        u -= ar[i] * w[p - 1 - i:n - 1 - i]
    if ma.size == 0:
        return u
    return signal.lfilter([1.0], np.r_[1.0, ma], u)


def _css_objective(params: np.ndarray, w: np.ndarray, p: int) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        e = css_residuals(w, params[:p], params[p:])
        sse = float(e @ e)
    if not math.isfinite(sse):
        return _PENALTY * (1.0 + float(params @ params))
    return sse


def _max_root_modulus(coefficients: np.ndarray, sign: float) -> float:
    """Largest |root| of z^k + sign * (c_1 z^(k-1) + ... + c_k)."""
    if coefficients.size == 0 or not np.any(coefficients):
        return 0.0
    return float(np.max(np.abs(np.roots(np.r_[1.0, sign * coefficients]))))


@dataclass(frozen=True, eq=False)
class ArimaFit:
    order: ArimaOrder
    ar: np.ndarray
    ma: np.ndarray
    constant: float
    sigma2: float
    aic: float
    series: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)

    def forecast(self, horizon: int) -> np.ndarray:
        """Mean forecasts by recursive extrapolation, integrated back d times."""
        p, q, d = self.order.p, self.order.q, self.order.d
        w = difference(self.series, d) - self.constant
        z_hist = list(w)
        e_hist = [0.0] * p + list(self.residuals)
        steps = []
        for _ in range(max(horizon, 0)):
            value = sum(self.ar[i] * z_hist[-1 - i] for i in range(p))
            value += sum(self.ma[j] * e_hist[-1 - j] for j in range(q))
            z_hist.append(value)
            e_hist.append(0.0)
            steps.append(value)
        out = np.asarray(steps, dtype=np.float64) + self.constant
        for level in reversed(range(d)):
            out = difference(self.series, level)[-1] + np.cumsum(out)
        return out


def arima_fit(context, order: ArimaOrder) -> ArimaFit:
    """Fits ARIMA(p, d, q) to `context` by CSS minimization with BFGS.

    AIC is n ln(sigma^2) + 2 k with n the number of conditional residuals,
    sigma^2 = SSE / n and k = `order.n_params`.

    Raises:
        InsufficientDataError: If len(context) < p + q + d + 10.
        NonStationaryError: If the AR polynomial has a root on or inside the unit circle.
        NonInvertibleError: If the MA polynomial does.
        SingularFitError: If the optimizer returns a non-finite fit.
    """
    x = np.asarray(context, dtype=np.float64).reshape(-1)
    if x.size < order.min_length:
        raise InsufficientDataError(f"{order} needs at least {order.min_length} points, got {x.size}.")
    if not np.all(np.isfinite(x)):
        raise DataError("ARIMA context contains non-finite values.")
    w = difference(x, order.d)
    constant = float(np.mean(w)) if order.include_constant else 0.0
    z = w - constant

    p, k = order.p, order.p + order.q
    if k:
        result = optimize.minimize(_css_objective, np.zeros(k), args=(z, p), method="BFGS")
        params = np.asarray(result.x, dtype=np.float64)
        if not np.all(np.isfinite(params)):
            raise SingularFitError(f"{order}: optimizer returned non-finite coefficients.")
    else:
        params = np.zeros(0)
    ar, ma = params[:p], params[p:]

    if _max_root_modulus(ar, -1.0) >= 1.0 - _ROOT_MARGIN:
        raise NonStationaryError(f"{order}: AR coefficients {ar} are not stationary.")
    if _max_root_modulus(ma, 1.0) >= 1.0 - _ROOT_MARGIN:
        raise NonInvertibleError(f"{order}: MA coefficients {ma} are not invertible.")

    residuals = css_residuals(z, ar, ma)
    sse = float(residuals @ residuals)
    if not math.isfinite(sse) or residuals.size == 0:
        raise SingularFitError(f"{order}: residual sum of squares is not finite.")
    n = residuals.size
    sigma2 = max(sse / n, np.finfo(np.float64).tiny)
    aic = n * math.log(sigma2) + 2 * order.n_params
    return ArimaFit(order, ar, ma, constant, sigma2, aic, x, residuals)


@dataclass
class ArimaSearchResult:
    """Outcome of the stepwise search; `evaluated` lists every order tried, in order."""
    forecast: np.ndarray
    best: ArimaFit | None
    evaluated: list[tuple[ArimaOrder, float | None]] = field(default_factory=list)
    fell_back: bool = False

    @property
    def order(self) -> ArimaOrder | None:
        return self.best.order if self.best is not None else None


def _neighbors(order: ArimaOrder) -> list[ArimaOrder]:
    p, d, q, c = order.p, order.d, order.q, order.include_constant
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, 1)]
    out = []
    for dp, dq in steps:
        np_, nq = p + dp, q + dq
        if 0 <= np_ <= MAX_P and 0 <= nq <= MAX_Q:
            out.append(ArimaOrder(np_, d, nq, c))
    if d == 1:
        out.append(ArimaOrder(p, d, q, not c))
    return out


def arima_auto(context, horizon: int, max_fits: int = MAX_FITS) -> ArimaSearchResult:
    """Stepwise AIC search over (p, q) for the heuristic d, then forecasts.

    The search starts from (2,d,2), (0,d,0), (1,d,0) and (0,d,1), moves to the
    first neighbor that lowers AIC and stops when no neighbor improves or
    `max_fits` orders have been tried. With d = 1 the starting models carry a
    drift term and the drift toggle is one of the neighbors. If every fit
    fails, the naive forecast is returned.
    """
    x = np.asarray(context, dtype=np.float64).reshape(-1)
    d = select_differencing(x)
    result = ArimaSearchResult(forecast=np.zeros(0), best=None)
    tried: set[ArimaOrder] = set()

    def attempt(order: ArimaOrder) -> ArimaFit | None:
        if order in tried or len(tried) >= max_fits:
            return None
        tried.add(order)
        try:
            fit = arima_fit(x, order)
        except ForecastError as e:
            logger.debug("Discarded %s: %s", order, e)
            result.evaluated.append((order, None))
            return None
        result.evaluated.append((order, fit.aic))
        return fit

    drift = d == 1
    for p, q in ((2, 2), (0, 0), (1, 0), (0, 1)):
        fit = attempt(ArimaOrder(p, d, q, drift))
        if fit is not None and (result.best is None or fit.aic < result.best.aic):
            result.best = fit

    while result.best is not None and len(tried) < max_fits:
        improved = False
        for order in _neighbors(result.best.order):
            fit = attempt(order)
            if fit is not None and fit.aic < result.best.aic:
                result.best = fit
                improved = True
                break
        if not improved:
            break

    if result.best is None:
        logger.warning("Every ARIMA candidate failed for a context of length %d; using the naive forecast.", x.size)
        result.forecast = naive_forecast(x, horizon)
        result.fell_back = True
        return result

    result.forecast = result.best.forecast(horizon)
    logger.debug("Selected %s (AIC %.3f) after %d fits.", result.best.order, result.best.aic, len(tried))
    return result
