"""Functional time series built from a cumulative count series.

The raw series is cut into overlapping fixed-length segments that share
endpoints, turned into daily growth-rate curves by within-segment log
differences, and treated as a stationary sequence of curves. Dependence
between consecutive curves is captured by a long-run covariance estimated
with a flat-top lag window, whose eigenanalysis gives forecast-oriented
components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .funcdata import (
    GridCurve,
    SmootherConfig,
    quadrature_weights,
    smooth_curve,
)
from .fpca import FpcaConfig, _eigendecompose

__all__ = [
    "RegularFts",
    "LrcConfig",
    "LrcResult",
    "DynamicFpcaModel",
    "segment",
    "growth_rates",
    "smooth_fts",
    "flat_top_kernel",
    "autocovariance",
    "long_run_cov",
    "fit_dynamic_fpca",
]


@dataclass(frozen=True)
class RegularFts:
    """An ordered sequence of curves on one shared grid.

    For raw count segments produced by :func:`segment`, consecutive curves
    share endpoints: curve n starts at the value curve n-1 ended on.
    """

    curves: np.ndarray
    grid: np.ndarray
    segment_length: int = 14
    stride: int = 13
    origin_date: object = None
    last_observed_count: float | None = None
    trimmed_head: int = 0

    def __post_init__(self):
        c = np.asarray(self.curves, dtype=float)
        g = np.asarray(self.grid, dtype=float)
        if c.ndim != 2 or c.shape[1] != g.size:
            raise ValueError("curves must be a 2-D array matching the grid")
        if c.shape[0] < 1:
            raise ValueError("need at least one curve")
        if not np.all(np.diff(g) > 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "curves", c)
        object.__setattr__(self, "grid", g)

    @property
    def n_curves(self) -> int:
        return int(self.curves.shape[0])


@dataclass(frozen=True)
class LrcConfig:
    """Flat-top lag-window settings.

    kernel_flat is the kernel's flat-region fraction. bandwidth may be a
    positive number of lags or "auto" for the plug-in rule
    h = clamp(c * N**final_power, 1, N-1) with c derived from the ratio of
    first to zeroth pilot spectral moments at pilot bandwidth N**pilot_power.
    noise_floor scales the white-noise sampling floor subtracted from each
    lag's squared norm in the first moment.
    """

    kernel_flat: float = 0.5
    bandwidth: float | str = "auto"
    pilot_power: float = 0.2
    final_power: float = 1.0 / 3.0
    noise_floor: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.kernel_flat < 1.0:
            raise ValueError("kernel_flat must be in (0, 1)")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "auto":
                raise ValueError("bandwidth must be positive or 'auto'")
        elif not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be non-negative")


@dataclass(frozen=True)
class LrcResult:
    matrix: np.ndarray
    mean: np.ndarray
    bandwidth: float
    autocov_stack: np.ndarray  # lags 0..L-1, shape (L, G, G)


@dataclass(frozen=True)
class DynamicFpcaModel:
    """Eigenstructure of the long-run covariance plus quadrature scores."""

    mean: GridCurve
    eigenvalues: np.ndarray
    eigenfunctions: tuple
    scores: np.ndarray
    fve: np.ndarray
    long_run_cov: np.ndarray
    autocov_stack: np.ndarray
    bandwidth: float

    @property
    def grid(self) -> np.ndarray:
        return self.mean.grid

    @property
    def k(self) -> int:
        return int(self.eigenvalues.size)

    def eigenfunction_matrix(self) -> np.ndarray:
        return np.column_stack([ef.values for ef in self.eigenfunctions])


def segment(
    counts,
    dates=None,
    segment_length: int = 14,
    stride: int = 13,
) -> RegularFts:
    """Cut a cumulative count series into overlapping raw-count curves.

    The series tail is kept: when the length minus one is not a multiple of
    the stride, the leftover days are trimmed from the head so the final
    segment ends on the last observation. Returns curves on grid 1..14.

    Raises
    ------
    ValueError
        If the series is shorter than one segment, or any count is not
        positive (named by date when dates are supplied).
    """
    c = np.asarray(counts, dtype=float)
    if c.ndim != 1:
        raise ValueError("counts must be 1-D")
    if c.size < segment_length:
        raise ValueError(
            f"series of {c.size} days is shorter than one {segment_length}-day segment"
        )
    bad = np.nonzero(c <= 0)[0]
    if bad.size:
        where = dates[bad[0]] if dates is not None else f"index {bad[0]}"
        raise ValueError(f"non-positive cumulative count at {where}")
    n = (c.size - segment_length) // stride + 1
    trim = (c.size - segment_length) % stride
    starts = trim + stride * np.arange(n)
    curves = np.vstack([c[s : s + segment_length] for s in starts])
    origin = None
    if dates is not None:
        origin = dates[trim]
    return RegularFts(
        curves=curves,
        grid=np.arange(1, segment_length + 1, dtype=float),
        segment_length=segment_length,
        stride=stride,
        origin_date=origin,
        last_observed_count=float(c[-1]),
        trimmed_head=int(trim),
    )


def growth_rates(fts: RegularFts) -> RegularFts:
    """Daily growth-rate curves: 100 times the within-segment log differences.

    Each raw segment of length L yields L-1 rates, re-indexed on grid 1..L-1.
    """
    if np.any(fts.curves <= 0):
        raise ValueError("growth rates need strictly positive counts")
    rates = 100.0 * np.diff(np.log(fts.curves), axis=1)
    return RegularFts(
        curves=rates,
        grid=np.arange(1, fts.curves.shape[1], dtype=float),
        segment_length=fts.segment_length,
        stride=fts.stride,
        origin_date=fts.origin_date,
        last_observed_count=fts.last_observed_count,
        trimmed_head=fts.trimmed_head,
    )


def smooth_fts(fts: RegularFts, sconf: SmootherConfig = SmootherConfig()) -> RegularFts:
    """Smooth every curve with one common local-linear bandwidth.

    With bandwidth "auto" the common bandwidth minimizes the sum of
    per-curve GCV scores over a shared geometric candidate grid.
    """
    from .funcdata import _gcv_bandwidth_1d, _loclin_fit_1d, _min_feasible_bandwidth

    if fts.grid.size < 5:
        raise ValueError("need at least 5 grid points per curve")
    g = fts.grid
    w = np.ones_like(g)
    if sconf.bandwidth == "auto":
        h_min = _min_feasible_bandwidth(g, g)
        span = float(g[-1] - g[0])
        candidates = np.geomspace(h_min, max(span, h_min * (1 + 1e-6)), 10)
        best_h, best_score = candidates[-1], np.inf
        n = float(g.size)
        for h in candidates:
            total = 0.0
            ok = True
            for row in fts.curves:
                fits, hat = _loclin_fit_1d(g, row, w, h, g)
                if np.any(np.isnan(fits)):
                    ok = False
                    break
                trh = float(hat.sum())
                if trh >= n:
                    ok = False
                    break
                total += n * float(((row - fits) ** 2).sum()) / (n - trh) ** 2
            if ok and total < best_score - 1e-15:
                best_h, best_score = h, total
        h = float(best_h)
    else:
        h = float(sconf.bandwidth)
    cfg = SmootherConfig(kernel=sconf.kernel, bandwidth=h, grid_size=sconf.grid_size)
    smoothed = np.vstack(
        [smooth_curve((g, row), cfg, g).values for row in fts.curves]
    )
    return RegularFts(
        curves=smoothed,
        grid=g,
        segment_length=fts.segment_length,
        stride=fts.stride,
        origin_date=fts.origin_date,
        last_observed_count=fts.last_observed_count,
        trimmed_head=fts.trimmed_head,
    )


def flat_top_kernel(x, k: float = 0.5):
    """Flat-top lag weight: 1 on |x| < k, linear to 0 at |x| = 1, 0 outside."""
    if not 0.0 < k < 1.0:
        raise ValueError("k must be in (0, 1)")
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.where(ax < k, 1.0, np.where(ax < 1.0, (ax - 1.0) / (k - 1.0), 0.0))
    return out if out.ndim else float(out)


def autocovariance(centered: np.ndarray, lag: int) -> np.ndarray:
    """Lag-i autocovariance surface of a centered curve sequence.

    For lag i >= 0 this is the average of outer(Y_r, Y_{r+i}) over the
    N - i available pairs, divided by N - i. Negative lags transpose:
    gamma_{-i}(s, t) = gamma_i(t, s).
    """
    n = centered.shape[0]
    i = abs(int(lag))
    if i >= n:
        raise ValueError(f"lag {lag} needs more than {i} curves")
    lead = centered[: n - i]
    lagged = centered[i:]
    g = lead.T @ lagged / (n - i)
    return g if lag >= 0 else g.T


def long_run_cov(fts: RegularFts, config: LrcConfig = LrcConfig()) -> LrcResult:
    """Flat-top lag-window estimate of the long-run covariance surface.

    Curves are centered at their pointwise mean internally; the mean is
    returned alongside the symmetrized surface and the bandwidth in use.
    """
    n = fts.n_curves
    if n < 3:
        raise ValueError("need at least 3 curves")
    mean = fts.curves.mean(axis=0)
    centered = fts.curves - mean[None, :]
    gammas = np.stack([autocovariance(centered, i) for i in range(n)])

    if config.bandwidth == "auto":
        h = _plugin_bandwidth(gammas, n, config)
    else:
        h = float(config.bandwidth)
        if h <= 0:
            raise ValueError("bandwidth must be positive")

    C = _windowed_sum(gammas, h, config.kernel_flat, n)
    C = (C + C.T) / 2.0
    L = min(n, math.ceil(h))
    return LrcResult(matrix=C, mean=mean, bandwidth=float(h), autocov_stack=gammas[:L])


def _windowed_sum(gammas, h, kflat, n):
    limit = min(n, math.ceil(h))
    C = flat_top_kernel(0.0, kflat) * gammas[0]
    for i in range(1, limit):
        w = flat_top_kernel(i / h, kflat)
        if w == 0.0:
            continue
        C = C + w * (gammas[i] + gammas[i].T)
    return C

def _plugin_bandwidth(gammas, n, config):
    """Adaptive bandwidth from pilot-weighted spectral moment norms.

    The first-moment norm uses per-lag Frobenius norms with the white-noise
    sampling floor (tr gamma_0)^2 / (N - i) removed, so an uncorrelated
    series collapses to the minimum bandwidth instead of chasing noise.
    """
    h0 = max(1.0, float(n) ** config.pilot_power)
    limit = min(n, math.ceil(h0))
    norm0 = float(np.linalg.norm(gammas[0]))
    if norm0 <= 0.0:
        return 1.0
    floor = config.noise_floor * float(np.trace(gammas[0])) ** 2
    moment1 = 0.0
    for i in range(1, limit):
        w = flat_top_kernel(i / h0, config.kernel_flat)
        if w == 0.0:
            continue
        sq = float(np.linalg.norm(gammas[i])) ** 2 - floor / (n - i)
        if sq <= 0.0:
            continue
        moment1 += 2.0 * w * i * math.sqrt(sq)
    c = (moment1 / norm0) ** (1.0 / 3.0)
    return float(np.clip(c * float(n) ** config.final_power, 1.0, n - 1.0))


def fit_dynamic_fpca(
    fts: RegularFts,
    lrc: LrcConfig = LrcConfig(),
    fconf: FpcaConfig = FpcaConfig(),
) -> DynamicFpcaModel:
    """Eigenanalysis of the long-run covariance with quadrature scores.

    The mean curve is the pointwise average. Scores are plain quadrature
    inner products of the centered curves with each eigenfunction; no
    conditional-expectation step is needed on a dense regular grid.
    """
    if fts.n_curves < 3:
        raise ValueError("need at least 3 curves")
    lr = long_run_cov(fts, lrc)
    lam_all, phi_all = _eigendecompose(lr.matrix, fts.grid)
    if lam_all.size == 0:
        raise ValueError("long-run covariance has no positive eigenvalues")
    share = np.cumsum(lam_all) / lam_all.sum()
    k = int(np.searchsorted(share, fconf.fve_threshold - 1e-15) + 1)
    k = min(k, fconf.max_k, lam_all.size)
    lam, phi = lam_all[:k], phi_all[:, :k]
    fve = np.cumsum(lam_all)[:k] / lam_all.sum()

    w = quadrature_weights(fts.grid)
    centered = fts.curves - lr.mean[None, :]
    scores = (centered * w[None, :]) @ phi

    return DynamicFpcaModel(
        mean=GridCurve(fts.grid, lr.mean),
        eigenvalues=lam,
        eigenfunctions=tuple(GridCurve(fts.grid, phi[:, j]) for j in range(k)),
        scores=scores,
        fve=fve,
        long_run_cov=lr.matrix,
        autocov_stack=lr.autocov_stack,
        bandwidth=lr.bandwidth,
    )
