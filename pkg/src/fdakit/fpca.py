"""Functional principal component analysis for irregular data.

The estimator follows the conditional-expectation route: smooth a pooled
mean, smooth the off-diagonal raw covariances into a surface, recover the
measurement-error variance from the diagonal gap, eigendecompose the
discretized surface under quadrature weights, then predict per-subject
scores by best linear prediction with the fitted covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .funcdata import (
    GridCurve,
    IrregularFunctionalDataset,
    SmootherConfig,
    make_grid,
    quadrature_weights,
    smooth_curve,
    smooth_surface,
)

__all__ = [
    "FpcaConfig",
    "FpcaModel",
    "fit_pace",
    "pace_scores",
    "select_k",
    "modes_of_variation",
]

#: ridge schedule for per-subject covariance solves
_JITTER_START = 1e-8
_JITTER_LIMIT = 1e-2
_JITTER_STEP = 10.0


@dataclass(frozen=True)
class FpcaConfig:
    """Truncation settings: FVE threshold rule or pseudo-likelihood AIC."""

    fve_threshold: float = 0.9999
    max_k: int = 20
    selection: str = "FVE"

    def __post_init__(self):
        if not 0.0 < self.fve_threshold <= 1.0:
            raise ValueError("fve_threshold must be in (0, 1]")
        if self.max_k < 1:
            raise ValueError("max_k must be positive")
        if self.selection not in ("FVE", "AIC"):
            raise ValueError("selection must be 'FVE' or 'AIC'")


@dataclass(frozen=True)
class FpcaModel:
    """Fitted decomposition.

    Attributes
    ----------
    mean : GridCurve
    eigenvalues : ndarray, shape (K,)
        Descending, strictly positive.
    eigenfunctions : tuple of GridCurve
        Orthonormal under trapezoid quadrature on the model grid.
    sigma2 : float
        Pooled measurement-error variance estimate.
    scores : ndarray, shape (n, K)
        Conditional-expectation scores, subject order as in the input.
    fve : ndarray, shape (K,)
        Cumulative fraction of variance explained.
    covariance : ndarray
        Smoothed covariance surface on the model grid.
    diag_variance : GridCurve
        Smoothed raw variance along the diagonal (includes error variance).
    subject_ids : tuple
    truncation_residual_note : str
        Records that the truncation residual is absorbed into sigma2.
    """

    mean: GridCurve
    eigenvalues: np.ndarray
    eigenfunctions: tuple
    sigma2: float
    scores: np.ndarray
    fve: np.ndarray
    covariance: np.ndarray
    diag_variance: GridCurve
    subject_ids: tuple
    truncation_residual_note: str = (
        "components beyond K are absorbed into the error variance"
    )

    @property
    def grid(self) -> np.ndarray:
        return self.mean.grid

    @property
    def k(self) -> int:
        return int(self.eigenvalues.size)

    def eigenfunction_matrix(self) -> np.ndarray:
        """Eigenfunctions stacked as columns, shape (grid, K)."""
        return np.column_stack([ef.values for ef in self.eigenfunctions])

    def correlation_surface(self) -> np.ndarray:
        """Covariance surface rescaled to a correlation surface."""
        d = np.sqrt(np.clip(np.diag(self.covariance), 1e-300, None))
        return self.covariance / np.outer(d, d)

    def fitted_curve(self, i: int) -> GridCurve:
        """Truncated reconstruction of subject i on the model grid."""
        vals = self.mean.values + self.eigenfunction_matrix() @ self.scores[i]
        return GridCurve(self.grid, vals)


def _eigendecompose(cov: np.ndarray, grid: np.ndarray):
    """Quadrature-weighted eigenpairs of a discretized covariance surface.

    Returns eigenvalues (descending, positive only) and eigenfunctions as
    columns normalized so that the quadrature integral of phi^2 is 1.
    """
    w = quadrature_weights(grid)
    sw = np.sqrt(w)
    B = sw[:, None] * cov * sw[None, :]
    B = (B + B.T) / 2.0
    lam, vec = np.linalg.eigh(B)
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    keep = lam > 0
    lam, vec = lam[keep], vec[:, keep]
    phi = vec / sw[:, None]
    # deterministic sign: integral of phi >= 0, falling back to phi(t_min) >= 0
    for k in range(phi.shape[1]):
        s = float(w @ phi[:, k])
        if abs(s) < 1e-10:
            s = phi[0, k]
        if s < 0:
            phi[:, k] = -phi[:, k]
    return lam, phi


def select_k(eigenvalues, config: FpcaConfig, aic_context=None) -> int:
    """Number of components under the configured truncation rule.

    The FVE rule returns the smallest K whose cumulative eigenvalue share
    meets the threshold. The AIC rule needs the fitted pieces (passed by
    fit_pace) and minimizes a marginal pseudo-Gaussian AIC over K <= max_k.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0 or lam[0] <= 0:
        raise ValueError("need at least one positive eigenvalue")
    if config.selection == "FVE":
        share = np.cumsum(lam) / lam.sum()
        k = int(np.searchsorted(share, config.fve_threshold - 1e-15) + 1)
        return min(k, config.max_k, lam.size)
    if aic_context is None:
        raise ValueError("AIC selection requires the fitted model context")
    data, mean, phi, sigma2, grid = aic_context
    best_k, best_aic = 1, np.inf
    for k in range(1, min(config.max_k, lam.size) + 1):
        ll = 0.0
        for _, t, y in data.subjects:
            mu_i = np.interp(t, grid, mean)
            phi_i = np.column_stack([np.interp(t, grid, phi[:, j]) for j in range(k)])
            cov_i = phi_i @ (lam[:k, None] * phi_i.T)
            cov_i[np.diag_indices_from(cov_i)] += max(sigma2, 1e-12 * lam[0])
            r = y - mu_i
            c, low = cho_factor(cov_i, lower=True)
            logdet = 2.0 * np.log(np.diag(c)).sum()
            ll -= 0.5 * (
                t.size * np.log(2 * np.pi) + logdet + r @ cho_solve((c, low), r)
            )
        aic = -2.0 * ll + 2.0 * k
        if aic < best_aic:
            best_k, best_aic = k, aic
    return best_k


def _conditional_scores(t, y, grid, mean_values, phi, lam, sigma2):
    """Best-linear-prediction scores for one subject.

    The subject covariance is the truncated eigen-reconstruction at the
    subject's own times plus the error variance on the diagonal, which keeps
    the solve positive definite whenever sigma2 > 0.
    """
    mu_i = np.interp(t, grid, mean_values)
    r = y - mu_i
    phi_i = np.column_stack(
        [np.interp(t, grid, phi[:, j]) for j in range(phi.shape[1])]
    )
    cov_i = (phi_i * lam[None, :]) @ phi_i.T
    cov_i[np.diag_indices_from(cov_i)] += sigma2
    trace = float(np.trace(cov_i))
    if trace <= 0.0:
        return np.zeros(phi.shape[1])
    jitter = _JITTER_START * trace / t.size
    limit = _JITTER_LIMIT * trace / t.size
    attempt = 0.0
    while True:
        try:
            c, low = cho_factor(cov_i + attempt * np.eye(t.size), lower=True)
            break
        except np.linalg.LinAlgError:
            attempt = jitter if attempt == 0.0 else attempt * _JITTER_STEP
            if attempt > limit:
                raise RuntimeError(
                    "subject covariance not invertible within the ridge budget"
                ) from None
    return lam * (phi_i.T @ cho_solve((c, low), r))


def fit_pace(
    data: IrregularFunctionalDataset,
    sconf: SmootherConfig = SmootherConfig(),
    fconf: FpcaConfig = FpcaConfig(),
) -> FpcaModel:
    """Fit the full decomposition to an irregular functional dataset.

    Parameters
    ----------
    data : IrregularFunctionalDataset
    sconf : SmootherConfig
        Shared by the mean, diagonal, and surface smooth steps.
    fconf : FpcaConfig

    Returns
    -------
    FpcaModel

    Raises
    ------
    ValueError
        Fewer than 3 subjects, or no positive eigenvalue survives.
    """
    if len(data) < 3:
        raise ValueError("need at least 3 subjects")
    grid = make_grid(data.domain, sconf.grid_size)
    span = data.domain[1] - data.domain[0]

    t_all, y_all = data.pooled_points()
    mean = smooth_curve((t_all, y_all), sconf, grid)

    # raw covariances, off-diagonal band only
    band = span / sconf.grid_size
    ss, tt, vv = [], [], []
    diag_t, diag_v = [], []
    for _, t, y in data.subjects:
        r = y - np.interp(t, grid, mean.values)
        G = np.outer(r, r)
        dt = np.abs(t[:, None] - t[None, :])
        off = dt >= band
        si, ti = np.nonzero(off)
        ss.append(t[si])
        tt.append(t[ti])
        vv.append(G[si, ti])
        diag_t.append(t)
        diag_v.append(r * r)
    ss = np.concatenate(ss)
    tt = np.concatenate(tt)
    vv = np.concatenate(vv)
    if ss.size < 4:
        raise ValueError("not enough off-diagonal covariance pairs to smooth")

    cov = smooth_surface((ss, tt, vv), sconf, grid)
    diag_curve = smooth_curve(
        (np.concatenate(diag_t), np.concatenate(diag_v)), sconf, grid
    )

    # error variance from the diagonal gap, middle half of the domain only
    lo = data.domain[0] + 0.25 * span
    hi = data.domain[1] - 0.25 * span
    mid = (grid >= lo) & (grid <= hi)
    gap = diag_curve.values[mid] - np.diag(cov)[mid]
    sigma2 = float(np.mean(np.clip(gap, 0.0, None)))

    lam_all, phi_all = _eigendecompose(cov, grid)
    if lam_all.size == 0:
        raise ValueError("covariance surface has no positive eigenvalues")

    # zero-variance guard: when the spectrum is numerical dust relative to
    # the mean level, report a single degenerate component instead of
    # letting the selection rule spread over noise
    w = quadrature_weights(grid)
    mean_norm2 = float(np.sum(w * mean.values**2))
    if lam_all.sum() <= 1e-4 * mean_norm2:
        k = 1
    elif fconf.selection == "AIC":
        ctx = (data, mean.values, phi_all, sigma2, grid)
        k = select_k(lam_all, fconf, aic_context=ctx)
    else:
        k = select_k(lam_all, fconf)
    lam, phi = lam_all[:k], phi_all[:, :k]
    fve = np.cumsum(lam_all)[:k] / lam_all.sum()

    scores = np.vstack(
        [
            _conditional_scores(t, y, grid, mean.values, phi, lam, sigma2)
            for _, t, y in data.subjects
        ]
    )

    eigenfunctions = tuple(GridCurve(grid, phi[:, j]) for j in range(k))
    return FpcaModel(
        mean=mean,
        eigenvalues=lam,
        eigenfunctions=eigenfunctions,
        sigma2=sigma2,
        scores=scores,
        fve=fve,
        covariance=cov,
        diag_variance=diag_curve,
        subject_ids=tuple(data.ids()),
    )


def pace_scores(model: FpcaModel, subject) -> np.ndarray:
    """Conditional-expectation scores for one (times, values) subject."""
    t = np.asarray(subject[0], dtype=float)
    y = np.asarray(subject[1], dtype=float)
    if t.size != y.size or t.size == 0:
        raise ValueError("subject needs matching nonempty times and values")
    lo, hi = model.grid[0], model.grid[-1]
    if t.min() < lo - 1e-9 or t.max() > hi + 1e-9:
        raise ValueError("subject times outside the model domain")
    return _conditional_scores(
        t,
        y,
        model.grid,
        model.mean.values,
        model.eigenfunction_matrix(),
        model.eigenvalues,
        model.sigma2,
    )


def modes_of_variation(model: FpcaModel, k: int, c: float = 2.0):
    """Mean plus-and-minus c standard deviations of component k.

    Returns the (plus, minus) pair of curves on the model grid.
    """
    if not 1 <= k <= model.k:
        raise ValueError(f"component index {k} out of range 1..{model.k}")
    offset = c * np.sqrt(model.eigenvalues[k - 1]) * model.eigenfunctions[k - 1].values
    return (
        GridCurve(model.grid, model.mean.values + offset),
        GridCurve(model.grid, model.mean.values - offset),
    )
