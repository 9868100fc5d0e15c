"""Forecasting on top of the dynamic decomposition.

Component scores are forecast with small autoregressions chosen by AIC,
the curve forecast is mean plus score-weighted eigenfunctions, and count
paths come back through the exponential inverse of the growth-rate
transform. Prediction intervals are nonparametric: bootstrap quantiles of
pooled in-sample forecast errors, inflated by the smallest multiplier that
reaches the nominal in-sample coverage. A classical ARIMA fit on the log
counts serves as the comparison baseline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .funcdata import GridCurve, SmootherConfig
from .fts import (
    DynamicFpcaModel,
    LrcConfig,
    RegularFts,
    fit_dynamic_fpca,
    growth_rates,
    smooth_fts,
)
from .fpca import FpcaConfig

__all__ = [
    "ScoreModel",
    "ForecastResult",
    "ArimaBaseline",
    "fit_ar",
    "ar_forecast",
    "forecast_scores",
    "forecast_curve",
    "reconstruct_counts",
    "bootstrap_interval",
    "arima_baseline",
    "full_forecast",
]

_MAX_AR_ORDER = 4
_DELTA_GRID = np.round(np.arange(0.50, 3.00 + 1e-9, 0.01), 2)


@dataclass(frozen=True)
class ScoreModel:
    """Univariate AR(p) for one component's score series.

    aic_table rows are (order, aic, admissible); inadmissible candidates
    (too little data or unstable roots) carry aic = inf.
    """

    order: int
    intercept: float
    coefficients: np.ndarray
    innovation_variance: float
    aic_table: tuple


@dataclass(frozen=True)
class ForecastResult:
    horizon: int
    growth_curve: GridCurve
    counts: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    delta_alpha: float
    alpha: float
    eta_lower: np.ndarray
    eta_upper: np.ndarray
    degenerate: bool


@dataclass(frozen=True)
class ArimaBaseline:
    order: tuple
    points: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    aicc: float
    selection: tuple


def _stationary(coefs: np.ndarray) -> bool:
    p = coefs.size
    if p == 0:
        return True
    companion = np.zeros((p, p))
    companion[0, :] = coefs
    if p > 1:
        companion[1:, :-1] = np.eye(p - 1)
    return bool(np.all(np.abs(np.linalg.eigvals(companion)) < 1.0 - 1e-10))


def fit_ar(series, max_order: int = _MAX_AR_ORDER) -> ScoreModel:
    """AR(p) by conditional least squares, order chosen by AIC.

    Orders 0..max_order compete on the common effective sample (the rows
    usable by the largest candidate), then the winner is refit on its own
    full conditional sample. AR(0) is the mean model and always admissible,
    so constant series are handled without special casing.
    """
    y = np.asarray(series, dtype=float)
    n = y.size
    if n < 4:
        raise ValueError("need at least 4 observations")
    # candidate must leave n - p >= p + 2 rows so the regression is overdetermined
    p_max = min(max_order, max(0, (n - 2) // 2))

    table = []
    best_order, best_aic = 0, np.inf
    n_common = n - p_max
    for p in range(p_max + 1):
        coefs, intercept, sig2 = _ar_ls(y, p, rows=n_common)
        admissible = sig2 is not None and _stationary(coefs)
        if admissible:
            aic = n_common * np.log(max(sig2, 1e-300)) + 2.0 * (p + 2)
        else:
            aic = np.inf
        table.append((p, float(aic), bool(admissible)))
        if aic < best_aic:
            best_order, best_aic = p, aic

    coefs, intercept, sig2 = _ar_ls(y, best_order, rows=n - best_order)
    if sig2 is None:
        coefs, intercept, sig2 = np.empty(0), float(y.mean()), float(np.var(y))
    return ScoreModel(
        order=int(best_order),
        intercept=float(intercept),
        coefficients=np.asarray(coefs, dtype=float),
        innovation_variance=float(max(sig2, 0.0)),
        aic_table=tuple(table),
    )


def _ar_ls(y, p, rows):
    """Least-squares AR(p) on the last ``rows`` usable rows."""
    n = y.size
    if rows < p + 2 or rows < 1:
        return np.empty(0), float(y.mean()), None
    if p == 0:
        seg = y[n - rows :]
        return np.empty(0), float(seg.mean()), float(np.var(seg))
    X = np.column_stack(
        [np.ones(rows)] + [y[n - rows - k : n - k] for k in range(1, p + 1)]
    )
    target = y[n - rows :]
    beta, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ beta
    return beta[1:], float(beta[0]), float(resid @ resid / rows)


def ar_forecast(model: ScoreModel, series, steps: int) -> np.ndarray:
    """Iterated point forecasts from the fitted autoregression."""
    y = list(np.asarray(series, dtype=float))
    out = []
    for _ in range(steps):
        nxt = model.intercept
        for k, c in enumerate(model.coefficients, start=1):
            nxt += c * y[-k]
        y.append(nxt)
        out.append(nxt)
    return np.asarray(out)


def forecast_scores(scores: np.ndarray, horizon: int = 1) -> np.ndarray:
    """Per-component score forecasts ``horizon`` steps ahead.

    Returns the forecast at the final step for each of the K components.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[0] < 4:
        raise ValueError("need at least 4 curves of scores")
    out = np.empty(s.shape[1])
    for k in range(s.shape[1]):
        model = fit_ar(s[:, k])
        out[k] = ar_forecast(model, s[:, k], horizon)[-1]
    return out


def forecast_curve(model: DynamicFpcaModel, score_forecasts) -> GridCurve:
    """Mean curve plus score-weighted eigenfunction sum."""
    xi = np.asarray(score_forecasts, dtype=float)
    if xi.size != model.k:
        raise ValueError(f"expected {model.k} score forecasts, got {xi.size}")
    values = model.mean.values + model.eigenfunction_matrix() @ xi
    return GridCurve(model.grid, values)


def reconstruct_counts(growth_curve, last_count: float) -> np.ndarray:
    """Cumulative counts implied by a growth-rate curve.

    count[j] = last_count * exp(sum of the first j rates / 100).
    """
    if not last_count > 0:
        raise ValueError("last_count must be positive")
    r = growth_curve.values if isinstance(growth_curve, GridCurve) else growth_curve
    r = np.asarray(r, dtype=float)
    return float(last_count) * np.exp(np.cumsum(r) / 100.0)


def bootstrap_interval(
    in_sample_errors,
    point_forecast,
    alpha: float = 0.2,
    B: int = 1000,
    seed: int = 20200815,
):
    """Calibrated bootstrap interval around a count forecast.

    Parameters
    ----------
    in_sample_errors : sequence of per-grid-point error arrays
        Pooled one-step errors (actual minus forecast), one array per grid
        point, each with at least 2 entries.
    point_forecast : array of counts, same length
    alpha : float
        1 - alpha is the target coverage.
    B : int
        Bootstrap draws per grid point.
    seed : int
        Quantiles use linear interpolation, so results are reproducible
        bit for bit under a fixed seed.

    Returns
    -------
    (lower, upper, delta_alpha, eta_lower, eta_upper, degenerate)
    """
    point = np.asarray(point_forecast, dtype=float)
    errors = [np.asarray(e, dtype=float) for e in in_sample_errors]
    if len(errors) != point.size:
        raise ValueError("one error list per grid point is required")
    for j, e in enumerate(errors):
        if e.size < 2:
            raise ValueError(f"grid point {j + 1}: need at least 2 in-sample errors")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")

    rng = np.random.default_rng(seed)
    eta_lb = np.empty(point.size)
    eta_ub = np.empty(point.size)
    for j, e in enumerate(errors):
        boot = rng.choice(e, size=B, replace=True)
        eta_lb[j] = np.quantile(boot, alpha / 2.0)
        eta_ub[j] = np.quantile(boot, 1.0 - alpha / 2.0)

    if all(np.all(e == 0.0) for e in errors):
        return point.copy(), point.copy(), float(_DELTA_GRID[0]), eta_lb, eta_ub, True

    pooled = np.concatenate(errors)
    owners = np.concatenate([np.full(e.size, j) for j, e in enumerate(errors)])
    target = 1.0 - alpha
    delta = float(_DELTA_GRID[-1])
    for d in _DELTA_GRID:
        covered = (pooled >= d * eta_lb[owners]) & (pooled <= d * eta_ub[owners])
        if covered.mean() >= target:
            delta = float(d)
            break
    return (
        point + delta * eta_lb,
        point + delta * eta_ub,
        delta,
        eta_lb,
        eta_ub,
        False,
    )


def arima_baseline(counts, horizon: int = 13, alpha: float = 0.2) -> ArimaBaseline:
    """Grid-searched ARIMA on log counts with Gaussian intervals.

    Orders p, q <= 2 and d <= 2 compete by AICc; the trend term is a
    constant for d = 0, a drift for d = 1, and nothing for d = 2. Interval
    bounds are exponentiated back to the count scale.
    """
    from statsmodels.tools.sm_exceptions import ConvergenceWarning, ValueWarning
    from statsmodels.tsa.arima.model import ARIMA

    c = np.asarray(counts, dtype=float)
    if c.size < 20:
        raise ValueError("need a series of at least 20 counts")
    if np.any(c <= 0):
        raise ValueError("counts must be positive for the log transform")
    logc = np.log(c)

    trend_for = {0: "c", 1: "t", 2: "n"}
    best = None
    selection = []
    for d in range(3):
        for p in range(3):
            for q in range(3):
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", ConvergenceWarning)
                        warnings.simplefilter("ignore", ValueWarning)
                        warnings.simplefilter("ignore", RuntimeWarning)
                        warnings.simplefilter("ignore", UserWarning)
                        res = ARIMA(
                            logc, order=(p, d, q), trend=trend_for[d]
                        ).fit()
                    aicc = float(res.aicc)
                except Exception:
                    selection.append(((p, d, q), float("inf")))
                    continue
                selection.append(((p, d, q), aicc))
                if np.isfinite(aicc) and (best is None or aicc < best[1]):
                    best = ((p, d, q), aicc, res)
    if best is None:
        raise RuntimeError("every ARIMA candidate failed to fit")
    order, aicc, res = best
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fc = res.get_forecast(horizon)
        mean = fc.predicted_mean
        ci = fc.conf_int(alpha=alpha)
    ci = np.asarray(ci, dtype=float)
    return ArimaBaseline(
        order=order,
        points=np.exp(np.asarray(mean, dtype=float)),
        lower=np.exp(ci[:, 0]),
        upper=np.exp(ci[:, 1]),
        aicc=float(aicc),
        selection=tuple(selection),
    )


def full_forecast(
    segments: RegularFts,
    in_sample_errors,
    lrc: LrcConfig = LrcConfig(),
    fconf: FpcaConfig = FpcaConfig(),
    sconf: SmootherConfig | None = SmootherConfig(),
    alpha: float = 0.2,
    B: int = 1000,
    seed: int = 20200815,
) -> ForecastResult:
    """One-step curve forecast from raw count segments, with intervals.

    The caller supplies pooled in-sample errors (from the expanding-window
    backtest) for the bootstrap calibration. ``sconf=None`` skips the
    per-curve smoothing step.
    """
    rates = growth_rates(segments)
    if sconf is not None:
        rates = smooth_fts(rates, sconf)
    model = fit_dynamic_fpca(rates, lrc, fconf)
    xi = forecast_scores(model.scores, horizon=1)
    curve = forecast_curve(model, xi)
    counts = reconstruct_counts(curve, segments.last_observed_count)
    lower, upper, delta, eta_lb, eta_ub, degenerate = bootstrap_interval(
        in_sample_errors, counts, alpha=alpha, B=B, seed=seed
    )
    return ForecastResult(
        horizon=curve.values.size,
        growth_curve=curve,
        counts=counts,
        lower=lower,
        upper=upper,
        delta_alpha=delta,
        alpha=alpha,
        eta_lower=eta_lb,
        eta_upper=eta_ub,
        degenerate=degenerate,
    )
