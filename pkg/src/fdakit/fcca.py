"""Canonical correlation between two functional samples.

Curves are expanded in an orthonormal Fourier basis, the coefficient
covariances are ridge-regularized, and the canonical system is solved as a
singular value decomposition of the whitened cross-covariance. Without the
ridge the problem is ill-posed: the leading correlation drifts to 1 as the
basis grows, so the regularization strength is part of every reported result.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .funcdata import (
    GridCurve,
    IrregularFunctionalDataset,
    make_grid,
    quadrature_weights,
)

__all__ = ["CcaConfig", "CcaResult", "fit_fcca", "canonical_scores", "fourier_basis"]


@dataclass(frozen=True)
class CcaConfig:
    """n_basis must be odd: a constant plus sine/cosine pairs."""

    n_basis: int = 25
    ridge: float = 1e-8
    n_pairs: int = 2

    def __post_init__(self):
        if self.n_basis < 3 or self.n_basis % 2 == 0:
            raise ValueError("n_basis must be an odd integer >= 3")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be positive")


@dataclass(frozen=True)
class CcaResult:
    """Canonical correlations, weight functions, and per-subject scores.

    subject_scores has shape (n, n_pairs, 2); [:, k, 0] holds the first
    sample's probe scores for pair k and [:, k, 1] the second sample's.
    Probe-score columns have unit sample variance and are uncorrelated
    across pairs on the same side (up to the ridge perturbation).
    """

    correlations: np.ndarray
    weight_functions: tuple
    subject_scores: np.ndarray
    subject_ids: tuple
    ridge: float

    def __post_init__(self):
        rho = np.asarray(self.correlations, dtype=float)
        object.__setattr__(self, "correlations", rho)


def fourier_basis(grid: np.ndarray, n_basis: int, period: float) -> np.ndarray:
    """Orthonormal Fourier design matrix, shape (len(grid), n_basis).

    Column 0 is the constant; columns 2m-1 and 2m are the sine and cosine
    at frequency m over the period.
    """
    t = np.asarray(grid, dtype=float)
    T = float(period)
    B = np.empty((t.size, n_basis))
    B[:, 0] = 1.0 / np.sqrt(T)
    for m in range(1, (n_basis - 1) // 2 + 1):
        arg = 2.0 * np.pi * m * (t - t[0]) / T
        B[:, 2 * m - 1] = np.sqrt(2.0 / T) * np.sin(arg)
        B[:, 2 * m] = np.sqrt(2.0 / T) * np.cos(arg)
    return B


def _coefficients(sample: IrregularFunctionalDataset, n_basis: int):
    """Quadrature least-squares Fourier coefficients, one row per subject."""
    grid_size = max(51, 2 * n_basis + 1)
    grid = make_grid(sample.domain, grid_size)
    w = quadrature_weights(grid)
    period = sample.domain[1] - sample.domain[0]
    B = fourier_basis(grid, n_basis, period)
    BtW = B.T * w[None, :]
    gram = BtW @ B
    rows = []
    for _, t, y in sample.subjects:
        yg = np.interp(grid, t, y)
        rows.append(np.linalg.solve(gram, BtW @ yg))
    return np.vstack(rows), grid, B


def _inv_sqrt(S: np.ndarray, label: str) -> np.ndarray:
    lam, V = np.linalg.eigh((S + S.T) / 2.0)
    tiny = 1e-14 * max(lam.max(), 1.0)
    if lam.min() <= tiny:
        raise np.linalg.LinAlgError(
            f"{label} coefficient covariance is singular after ridge; "
            "increase the ridge or reduce n_basis"
        )
    return (V / np.sqrt(lam)[None, :]) @ V.T


def fit_fcca(
    sample_x: IrregularFunctionalDataset,
    sample_y: IrregularFunctionalDataset,
    config: CcaConfig = CcaConfig(),
) -> CcaResult:
    """Leading canonical correlations between two matched samples.

    Parameters
    ----------
    sample_x, sample_y : IrregularFunctionalDataset
        Must contain the same subject ids in the same order.
    config : CcaConfig

    Returns
    -------
    CcaResult

    Notes
    -----
    The ridge is relative: ``config.ridge`` times the mean diagonal of each
    coefficient covariance is added to that covariance's diagonal, which
    makes the correlations invariant to rescaling either sample.
    """
    ids_x, ids_y = sample_x.ids(), sample_y.ids()
    if ids_x != ids_y:
        extra = sorted(set(map(str, ids_x)).symmetric_difference(map(str, ids_y)))
        raise ValueError(f"subject ids differ between samples: {extra[:8]}")
    n = len(sample_x)
    if n < 2:
        raise ValueError("need at least 2 subjects")
    if n < config.n_basis:
        warnings.warn(
            f"n={n} subjects with n_basis={config.n_basis}; "
            "the coefficient covariances are rank-deficient and the ridge "
            "is doing the heavy lifting",
            UserWarning,
            stacklevel=2,
        )

    A_x, grid_x, B_x = _coefficients(sample_x, config.n_basis)
    A_y, grid_y, B_y = _coefficients(sample_y, config.n_basis)
    A_x = A_x - A_x.mean(axis=0, keepdims=True)
    A_y = A_y - A_y.mean(axis=0, keepdims=True)

    S_xx = A_x.T @ A_x / (n - 1)
    S_yy = A_y.T @ A_y / (n - 1)
    S_xy = A_x.T @ A_y / (n - 1)
    S_xx[np.diag_indices_from(S_xx)] += config.ridge * np.trace(S_xx) / config.n_basis
    S_yy[np.diag_indices_from(S_yy)] += config.ridge * np.trace(S_yy) / config.n_basis

    R_x = _inv_sqrt(S_xx, "first sample")
    R_y = _inv_sqrt(S_yy, "second sample")
    U, d, Vt = np.linalg.svd(R_x @ S_xy @ R_y)
    n_pairs = min(config.n_pairs, config.n_basis)
    rho = np.clip(d[:n_pairs], 0.0, 1.0)

    weight_functions = []
    scores = np.empty((n, n_pairs, 2))
    for k in range(n_pairs):
        wu = R_x @ U[:, k]
        wv = R_y @ Vt[k, :]
        anchor = wu[np.nonzero(np.abs(wu) > 1e-12)[0][0]] if np.any(np.abs(wu) > 1e-12) else 1.0
        if anchor < 0:
            wu, wv = -wu, -wv
        weight_functions.append(
            (GridCurve(grid_x, B_x @ wu), GridCurve(grid_y, B_y @ wv))
        )
        scores[:, k, 0] = A_x @ wu
        scores[:, k, 1] = A_y @ wv

    return CcaResult(
        correlations=rho,
        weight_functions=tuple(weight_functions),
        subject_scores=scores,
        subject_ids=tuple(ids_x),
        ridge=config.ridge,
    )


def canonical_scores(result: CcaResult, pair: int):
    """Probe-score pairs for one canonical pair, keyed by subject id."""
    if not 1 <= pair <= result.subject_scores.shape[1]:
        raise ValueError(f"pair index {pair} out of range")
    k = pair - 1
    return [
        (sid, float(result.subject_scores[i, k, 0]), float(result.subject_scores[i, k, 1]))
        for i, sid in enumerate(result.subject_ids)
    ]
