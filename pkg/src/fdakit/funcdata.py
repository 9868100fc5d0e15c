"""Functional data containers and local-linear kernel smoothers.

Everything downstream (FPCA, canonical correlation, the time-series stack)
works with curves observed on grids or at irregular times. This module owns
those containers plus the two nonparametric workhorses: a local-linear curve
smoother and a local-linear (planar) surface smoother, both Epanechnikov,
both with generalized cross-validation for automatic bandwidth choice.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridCurve",
    "IrregularFunctionalDataset",
    "SmootherConfig",
    "BandwidthWidenedWarning",
    "epanechnikov",
    "make_grid",
    "quadrature_weights",
    "smooth_curve",
    "smooth_surface",
]

#: number of candidate bandwidths on the geometric GCV grid
GCV_CANDIDATES = 10

#: raw-point counts above which inputs are pre-binned before smoothing
BIN_THRESHOLD_CURVE = 1000
BIN_THRESHOLD_SURFACE = 6000

#: cell counts used when binning kicks in
BIN_CELLS_CURVE = 201


class BandwidthWidenedWarning(UserWarning):
    """Raised as a warning when a requested bandwidth had to be widened."""


@dataclass(frozen=True)
class GridCurve:
    """A function sampled on a common evaluation grid.

    Parameters
    ----------
    grid : array-like
        Strictly increasing evaluation points.
    values : array-like
        Function values, one per grid point.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or v.ndim != 1 or g.size != v.size:
            raise ValueError("grid and values must be 1-D and equally long")
        if g.size >= 2 and not np.all(np.diff(g) > 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.grid.size


@dataclass(frozen=True)
class IrregularFunctionalDataset:
    """Per-subject observation times and values on a compact interval.

    ``subjects`` is a list of ``(id, times, values)`` triples. Times must be
    strictly increasing within each subject and lie inside ``domain``; every
    subject needs at least two observations.
    """

    subjects: tuple
    domain: tuple

    def __post_init__(self):
        lo, hi = float(self.domain[0]), float(self.domain[1])
        if not lo < hi:
            raise ValueError("domain must be a nondegenerate interval")
        cleaned = []
        for sid, times, values in self.subjects:
            t = np.asarray(times, dtype=float)
            y = np.asarray(values, dtype=float)
            if t.size != y.size:
                raise ValueError(f"subject {sid!r}: times/values length mismatch")
            if t.size < 2:
                raise ValueError(f"subject {sid!r}: needs at least 2 observations")
            if not np.all(np.diff(t) > 0):
                raise ValueError(f"subject {sid!r}: times must be strictly increasing")
            if t[0] < lo - 1e-12 or t[-1] > hi + 1e-12:
                raise ValueError(f"subject {sid!r}: times outside domain")
            cleaned.append((sid, t, y))
        object.__setattr__(self, "subjects", tuple(cleaned))
        object.__setattr__(self, "domain", (lo, hi))

    def __len__(self) -> int:
        return len(self.subjects)

    def ids(self) -> list:
        return [sid for sid, _, _ in self.subjects]

    def pooled_points(self) -> tuple[np.ndarray, np.ndarray]:
        """All (time, value) observations across subjects, time-sorted."""
        t = np.concatenate([s[1] for s in self.subjects])
        y = np.concatenate([s[2] for s in self.subjects])
        order = np.argsort(t, kind="stable")
        return t[order], y[order]


@dataclass(frozen=True)
class SmootherConfig:
    """Settings for the local-linear smoothers.

    bandwidth may be a positive float or the string ``"auto"``, in which case
    GCV picks one from a geometric candidate grid. grid_size controls the
    default common evaluation grid built by :func:`make_grid`.
    """

    kernel: str = "epanechnikov"
    bandwidth: float | str = "auto"
    grid_size: int = 51

    def __post_init__(self):
        if self.kernel != "epanechnikov":
            raise ValueError(f"unsupported kernel {self.kernel!r}")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "auto":
                raise ValueError("bandwidth must be a positive number or 'auto'")
        elif not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if int(self.grid_size) < 2:
            raise ValueError("grid_size must be at least 2")
        object.__setattr__(self, "grid_size", int(self.grid_size))


def epanechnikov(u):
    """Epanechnikov kernel 0.75 * (1 - u^2) on |u| < 1, zero outside."""
    u = np.asarray(u, dtype=float)
    out = 0.75 * (1.0 - u * u)
    return np.where(np.abs(u) < 1.0, out, 0.0)


def make_grid(domain: tuple, size: int) -> np.ndarray:
    """Equispaced evaluation grid of ``size`` points over ``domain``."""
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < hi:
        raise ValueError("domain must be a nondegenerate interval")
    return np.linspace(lo, hi, int(size))


def quadrature_weights(grid) -> np.ndarray:
    """Trapezoidal quadrature weights for an ordered grid.

    The weights sum to the grid span, so ``weights @ f(grid)`` approximates
    the integral of f over the span.
    """
    g = np.asarray(grid, dtype=float)
    if g.size < 2:
        raise ValueError("grid needs at least 2 points")
    if not np.all(np.diff(g) > 0):
        raise ValueError("grid must be strictly increasing")
    w = np.empty_like(g)
    w[0] = (g[1] - g[0]) / 2.0
    w[-1] = (g[-1] - g[-2]) / 2.0
    if g.size > 2:
        w[1:-1] = (g[2:] - g[:-2]) / 2.0
    return w


# ---------------------------------------------------------------------------
# curve smoothing


def _bin_points_1d(t, y, w, n_cells):
    """Average points into equal-width cells; each cell is represented by the
    weighted centroid of its members, which keeps degree-1 polynomial
    reproduction exact."""
    lo, hi = t.min(), t.max()
    if hi == lo:
        return t, y, w
    idx = np.minimum(((t - lo) / (hi - lo) * n_cells).astype(int), n_cells - 1)
    wsum = np.bincount(idx, weights=w, minlength=n_cells)
    keep = wsum > 0
    tw = np.bincount(idx, weights=w * t, minlength=n_cells)[keep] / wsum[keep]
    yw = np.bincount(idx, weights=w * y, minlength=n_cells)[keep] / wsum[keep]
    return tw, yw, wsum[keep]


def _loclin_fit_1d(t, y, w, h, targets):
    """Local-linear estimates at targets; returns (fits, hat_diag_or_None).

    hat diagonal entries are per single observation (weight 1) and are only
    meaningful when each target coincides with a data point; callers that need
    tr(H) pass targets == t.
    """
    fits = np.empty(targets.size)
    hat = np.empty(targets.size)
    order = np.argsort(t, kind="stable")
    ts, ys, ws = t[order], y[order], w[order]
    for j, x0 in enumerate(targets):
        leftmost = np.searchsorted(ts, x0 - h, side="left")
        rightmost = np.searchsorted(ts, x0 + h, side="right")
        d = ts[leftmost:rightmost] - x0
        k = ws[leftmost:rightmost] * epanechnikov(d / h)
        mask = k > 0
        d, k = d[mask], k[mask]
        yy = ys[leftmost:rightmost][mask]
        if d.size == 0:
            fits[j] = np.nan
            hat[j] = np.nan
            continue
        s0 = k.sum()
        s1 = (k * d).sum()
        s2 = (k * d * d).sum()
        den = s0 * s2 - s1 * s1
        scale = s0 * (h * h)
        if den <= 1e-12 * max(scale * scale, 1e-300):
            # degenerate window (single distinct time): local constant
            fits[j] = (k * yy).sum() / s0
            hat[j] = 0.75 / s0
        else:
            t0 = (k * yy).sum()
            t1 = (k * d * yy).sum()
            fits[j] = (s2 * t0 - s1 * t1) / den
            hat[j] = 0.75 * s2 / den
    return fits, hat


def _min_feasible_bandwidth(t, targets):
    """Smallest h giving every target at least 2 in-window distinct times."""
    tu = np.unique(t)
    if tu.size < 2:
        raise ValueError("all observation times identical; cannot smooth")
    need = np.empty(targets.size)
    for j, x0 in enumerate(targets):
        d = np.sort(np.abs(tu - x0))
        need[j] = d[1] if d.size > 1 else d[0]
    return float(need.max()) * (1.0 + 1e-9) + 1e-12


def _gcv_bandwidth_1d(t, y, w, candidates):
    best_h, best_score = None, np.inf
    n = w.sum()
    for h in candidates:
        fits, hat = _loclin_fit_1d(t, y, w, h, t)
        if np.any(np.isnan(fits)):
            continue
        trh = float((w * hat).sum())
        if trh >= n:
            continue
        rss = float((w * (y - fits) ** 2).sum())
        score = n * rss / (n - trh) ** 2
        if score < best_score - 1e-15:
            best_h, best_score = h, score
    if best_h is None:
        best_h = candidates[-1]
    return float(best_h)


def smooth_curve(points, config: SmootherConfig, out_grid) -> GridCurve:
    """Local-linear kernel regression of scattered (time, value) points.

    Parameters
    ----------
    points : sequence of (time, value) pairs, or a pair of arrays
    config : SmootherConfig
        ``bandwidth="auto"`` selects by GCV over a geometric candidate grid.
    out_grid : array-like
        Strictly increasing evaluation points.

    Returns
    -------
    GridCurve

    Notes
    -----
    A bandwidth too small for some evaluation window is widened to the
    minimal feasible value and a :class:`BandwidthWidenedWarning` is issued.
    Exactly linear inputs are reproduced to numerical precision.
    """
    t, y, w = _as_points_1d(points)
    targets = np.asarray(out_grid, dtype=float)
    if targets.ndim != 1 or targets.size == 0:
        raise ValueError("out_grid must be a nonempty 1-D array")
    if np.unique(t).size < 2:
        raise ValueError("all observation times identical; cannot smooth")

    if t.size > BIN_THRESHOLD_CURVE:
        t, y, w = _bin_points_1d(t, y, w, BIN_CELLS_CURVE)

    h_min = _min_feasible_bandwidth(t, np.concatenate([targets, t]))
    span = float(t.max() - t.min())
    if config.bandwidth == "auto":
        hi = max(span, h_min * (1 + 1e-6))
        candidates = np.geomspace(h_min, hi, GCV_CANDIDATES)
        h = _gcv_bandwidth_1d(t, y, w, candidates)
    else:
        h = float(config.bandwidth)
        if h < h_min:
            warnings.warn(
                f"bandwidth {h:g} too small for the data; widened to {h_min:g}",
                BandwidthWidenedWarning,
                stacklevel=2,
            )
            h = h_min
    fits, _ = _loclin_fit_1d(t, y, w, h, targets)
    return GridCurve(targets, fits)


def _as_points_1d(points):
    if isinstance(points, tuple) and len(points) in (2, 3):
        arrays = [np.asarray(a, dtype=float) for a in points]
    else:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise ValueError("points must be (time, value[, weight]) records")
        arrays = [pts[:, i] for i in range(pts.shape[1])]
    t, y = arrays[0], arrays[1]
    w = arrays[2] if len(arrays) == 3 else np.ones_like(t)
    if t.size == 0:
        raise ValueError("no points to smooth")
    return t, y, w


# ---------------------------------------------------------------------------
# surface smoothing


def _as_points_2d(points):
    if isinstance(points, tuple) and len(points) in (3, 4):
        arrays = [np.asarray(a, dtype=float) for a in points]
    else:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] not in (3, 4):
            raise ValueError("points must be (s, t, value[, weight]) records")
        arrays = [pts[:, i] for i in range(pts.shape[1])]
    s, t, v = arrays[0], arrays[1], arrays[2]
    w = arrays[3] if len(arrays) == 4 else np.ones_like(s)
    if s.size == 0:
        raise ValueError("no points to smooth")
    return s, t, v, w


def _bin_points_2d(s, t, v, w, n_cells):
    lo_s, hi_s = s.min(), s.max()
    lo_t, hi_t = t.min(), t.max()
    span_s = hi_s - lo_s or 1.0
    span_t = hi_t - lo_t or 1.0
    i = np.minimum(((s - lo_s) / span_s * n_cells).astype(int), n_cells - 1)
    j = np.minimum(((t - lo_t) / span_t * n_cells).astype(int), n_cells - 1)
    flat = i * n_cells + j
    size = n_cells * n_cells
    wsum = np.bincount(flat, weights=w, minlength=size)
    keep = wsum > 0
    sw = np.bincount(flat, weights=w * s, minlength=size)[keep] / wsum[keep]
    tw = np.bincount(flat, weights=w * t, minlength=size)[keep] / wsum[keep]
    vw = np.bincount(flat, weights=w * v, minlength=size)[keep] / wsum[keep]
    return sw, tw, vw, wsum[keep]


def _loclin_fit_2d(s, t, v, w, h, targets_s, targets_t, want_hat=False):
    order = np.argsort(s, kind="stable")
    ss, ts, vs, ws = s[order], t[order], v[order], w[order]
    m = targets_s.size
    fits = np.empty(m)
    hat = np.empty(m) if want_hat else None
    for j in range(m):
        s0_, t0_ = targets_s[j], targets_t[j]
        leftmost = np.searchsorted(ss, s0_ - h, side="left")
        rightmost = np.searchsorted(ss, s0_ + h, side="right")
        ds = ss[leftmost:rightmost] - s0_
        dt = ts[leftmost:rightmost] - t0_
        k = (
            ws[leftmost:rightmost]
            * epanechnikov(ds / h)
            * epanechnikov(dt / h)
        )
        mask = k > 0
        if not np.any(mask):
            fits[j] = np.nan
            if want_hat:
                hat[j] = np.nan
            continue
        ds, dt, k = ds[mask], dt[mask], k[mask]
        vv = vs[leftmost:rightmost][mask]
        X = np.column_stack([np.ones_like(ds), ds, dt])
        A = (X * k[:, None]).T @ X
        b = (X * k[:, None]).T @ vv
        try:
            coef = np.linalg.solve(A, b)
            fits[j] = coef[0]
            if want_hat:
                hat[j] = 0.5625 * np.linalg.solve(A, np.eye(3)[0])[0]
        except np.linalg.LinAlgError:
            fits[j] = (k * vv).sum() / k.sum()
            if want_hat:
                hat[j] = 0.5625 / k.sum()
    return fits, hat


def _min_feasible_bandwidth_2d(s, t, targets_s, targets_t):
    # every target window must contain >= 3 points in general position;
    # use the max over targets of the 3rd-smallest Chebyshev distance
    pts = np.column_stack([s, t])
    need = np.empty(targets_s.size)
    for j in range(targets_s.size):
        d = np.maximum(
            np.abs(pts[:, 0] - targets_s[j]), np.abs(pts[:, 1] - targets_t[j])
        )
        d.sort()
        need[j] = d[min(2, d.size - 1)]
    return float(need.max()) * (1.0 + 1e-9) + 1e-12


def _gcv_bandwidth_2d(s, t, v, w, candidates):
    best_h, best_score = None, np.inf
    n = w.sum()
    for h in candidates:
        fits, hat = _loclin_fit_2d(s, t, v, w, h, s, t, want_hat=True)
        if np.any(np.isnan(fits)):
            continue
        trh = float((w * hat).sum())
        if trh >= n:
            continue
        rss = float((w * (v - fits) ** 2).sum())
        score = n * rss / (n - trh) ** 2
        if score < best_score - 1e-15:
            best_h, best_score = h, score
    if best_h is None:
        best_h = candidates[-1]
    return float(best_h)


def smooth_surface(points, config: SmootherConfig, out_grid) -> np.ndarray:
    """Local-linear (planar) smoothing of scattered (s, t, value) points.

    Evaluates on ``out_grid x out_grid`` and returns the symmetrized matrix
    (M + M.T) / 2. Planar inputs v = a + b*s + c*t are reproduced exactly.
    """
    s, t, v, w = _as_points_2d(points)
    g = np.asarray(out_grid, dtype=float)
    if np.unique(np.column_stack([s, t]), axis=0).shape[0] < 4:
        raise ValueError("need at least 4 distinct (s, t) locations")
    rank = np.linalg.matrix_rank(
        np.column_stack([np.ones_like(s), s, t]) - 0.0, tol=1e-10
    )
    if rank < 3:
        raise ValueError("degenerate design: all (s, t) locations are collinear")

    if s.size > BIN_THRESHOLD_SURFACE:
        s, t, v, w = _bin_points_2d(s, t, v, w, config.grid_size)

    gs, gt = np.meshgrid(g, g, indexing="ij")
    targets_s, targets_t = gs.ravel(), gt.ravel()
    h_min = _min_feasible_bandwidth_2d(
        s, t, np.concatenate([targets_s, s]), np.concatenate([targets_t, t])
    )
    span = max(float(s.max() - s.min()), float(t.max() - t.min()))
    if config.bandwidth == "auto":
        hi = max(span, h_min * (1 + 1e-6))
        candidates = np.geomspace(h_min, hi, GCV_CANDIDATES)
        h = _gcv_bandwidth_2d(s, t, v, w, candidates)
    else:
        h = float(config.bandwidth)
        if h < h_min:
            warnings.warn(
                f"bandwidth {h:g} too small for the data; widened to {h_min:g}",
                BandwidthWidenedWarning,
                stacklevel=2,
            )
            h = h_min
    fits, _ = _loclin_fit_2d(s, t, v, w, h, targets_s, targets_t)
    M = fits.reshape(g.size, g.size)
    return (M + M.T) / 2.0
