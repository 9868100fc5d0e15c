"""Model-based clustering on principal component score features.

A plain Gaussian mixture fitted by EM, with the short-run/long-run
initialization strategy: several short EM runs from random subsets, then one
full run seeded by the best short-run likelihood. Cluster count is picked by
an automated elbow on the within-cluster sum of squares.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .fpca import FpcaConfig, fit_pace
from .funcdata import IrregularFunctionalDataset, SmootherConfig

__all__ = [
    "MixtureModel",
    "ElbowResult",
    "cluster_features",
    "em_fit",
    "assign",
    "select_k_elbow",
    "adjusted_rand_index",
    "DEFAULT_SEED",
]

DEFAULT_SEED = 20200815

_SHORT_RUNS = 10
_SHORT_ITERS = 5
_MAX_ITERS = 500
_TOL = 1e-8
_COV_FLOOR_REL = 1e-6
_EMPTY_MASS = 1e-10
_MAX_REINITS = 3


@dataclass(frozen=True)
class MixtureModel:
    """Fitted Gaussian mixture.

    loglik_trace records the log-likelihood after every E step of the final
    run; it is non-decreasing up to a 1e-8 tolerance.
    """

    k: int
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    loglik: float
    responsibilities: np.ndarray
    loglik_trace: tuple
    converged: bool


@dataclass(frozen=True)
class ElbowResult:
    k: int
    k_range: tuple
    wcss: tuple
    weak_elbow: bool


def cluster_features(
    data: IrregularFunctionalDataset,
    fpca_cfg: FpcaConfig = FpcaConfig(fve_threshold=0.99),
    sconf: SmootherConfig = SmootherConfig(),
) -> np.ndarray:
    """Score features for clustering: PACE scores, unit-variance columns.

    Columns whose variance is essentially zero (degenerate data) are left
    unscaled rather than dividing by nothing.
    """
    model = fit_pace(data, sconf, fpca_cfg)
    x = model.scores.copy()
    sd = x.std(axis=0, ddof=1)
    floor = 1e-12 * max(float(sd.max()), 1.0)
    nonzero = sd > floor
    x[:, nonzero] /= sd[nonzero]
    return x


def _log_gaussian(x, mean, cov):
    d = x.shape[1]
    c, low = cho_factor(cov, lower=True)
    logdet = 2.0 * np.log(np.diag(c)).sum()
    r = x - mean
    maha = np.einsum("ij,ij->i", r, cho_solve((c, low), r.T).T)
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)


def _e_step(x, weights, means, covs):
    n, k = x.shape[0], weights.size
    logp = np.empty((n, k))
    for c in range(k):
        logp[:, c] = np.log(weights[c]) + _log_gaussian(x, means[c], covs[c])
    norm = logsumexp(logp, axis=1)
    return np.exp(logp - norm[:, None]), float(norm.sum()), norm


def _m_step(x, resp, floor):
    n, d = x.shape
    mass = resp.sum(axis=0)
    weights = mass / n
    means = (resp.T @ x) / mass[:, None]
    covs = np.empty((resp.shape[1], d, d))
    for c in range(resp.shape[1]):
        r = x - means[c]
        covs[c] = (resp[:, c][:, None] * r).T @ r / mass[c]
        covs[c][np.diag_indices(d)] += floor
    return weights, means, covs


def _init_params(x, k, rng, floor):
    n, d = x.shape
    idx = rng.choice(n, size=k, replace=False)
    means = x[idx].copy()
    base = np.cov(x, rowvar=False, ddof=0).reshape(d, d) + floor * np.eye(d)
    covs = np.repeat(base[None, :, :], k, axis=0)
    weights = np.full(k, 1.0 / k)
    return weights, means, covs


def _run_em(x, weights, means, covs, floor, max_iters, tol, rng):
    """EM iterations with empty-cluster rescue; returns a MixtureModel."""
    trace = []
    reinits = 0
    resp, ll, per_point = _e_step(x, weights, means, covs)
    trace.append(ll)
    converged = False
    for _ in range(max_iters):
        mass = resp.sum(axis=0)
        while np.any(mass < _EMPTY_MASS):
            if reinits >= _MAX_REINITS:
                raise RuntimeError(
                    "EM kept producing empty clusters after "
                    f"{_MAX_REINITS} reinitializations"
                )
            reinits += 1
            c = int(np.argmin(mass))
            worst = int(np.argmin(per_point))
            means[c] = x[worst]
            d = x.shape[1]
            covs[c] = np.cov(x, rowvar=False, ddof=0).reshape(d, d) + floor * np.eye(d)
            weights = np.full_like(weights, 1.0 / weights.size)
            resp, ll, per_point = _e_step(x, weights, means, covs)
            mass = resp.sum(axis=0)
        weights, means, covs = _m_step(x, resp, floor)
        resp, ll_new, per_point = _e_step(x, weights, means, covs)
        trace.append(ll_new)
        if abs(ll_new - ll) < tol:
            converged = True
            ll = ll_new
            break
        ll = ll_new
    return MixtureModel(
        k=weights.size,
        weights=weights,
        means=means,
        covariances=covs,
        loglik=float(ll),
        responsibilities=resp,
        loglik_trace=tuple(trace),
        converged=converged,
    )


def em_fit(features: np.ndarray, k: int, seed: int = DEFAULT_SEED) -> MixtureModel:
    """Gaussian mixture fit with short-run seeding.

    Parameters
    ----------
    features : ndarray, shape (n, d)
    k : int
        Component count; requires n > k * (d + 1).
    seed : int
        Drives both the short runs and the final run; fits are deterministic
        given (features, k, seed).
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if n <= k * (d + 1):
        raise ValueError(f"need n > k*(d+1) points; have n={n}, k={k}, d={d}")
    floor = _COV_FLOOR_REL * float(np.var(x, axis=0, ddof=0).mean())
    floor = max(floor, 1e-300)
    rng = np.random.default_rng(seed)

    best = None
    for _ in range(_SHORT_RUNS):
        weights, means, covs = _init_params(x, k, rng, floor)
        try:
            short = _run_em(x, weights, means, covs, floor, _SHORT_ITERS, 0.0, rng)
        except RuntimeError:
            continue
        if best is None or short.loglik > best.loglik:
            best = short
    if best is None:
        raise RuntimeError("all short EM runs failed with empty clusters")

    return _run_em(
        x,
        best.weights.copy(),
        best.means.copy(),
        best.covariances.copy(),
        floor,
        _MAX_ITERS,
        _TOL,
        rng,
    )


def assign(model: MixtureModel, features: np.ndarray) -> np.ndarray:
    """Hard labels by maximum posterior; ties go to the smaller index."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != model.means.shape[1]:
        raise ValueError("feature dimension does not match the model")
    logp = np.empty((x.shape[0], model.k))
    for c in range(model.k):
        logp[:, c] = np.log(model.weights[c]) + _log_gaussian(
            x, model.means[c], model.covariances[c]
        )
    return np.argmax(logp, axis=1)


def _wcss(x, labels):
    total = 0.0
    for c in np.unique(labels):
        member = x[labels == c]
        total += float(((member - member.mean(axis=0)) ** 2).sum())
    return total


def select_k_elbow(
    features: np.ndarray,
    k_range=range(1, 9),
    seed: int = DEFAULT_SEED,
) -> ElbowResult:
    """Elbow rule on within-cluster sum of squares.

    Fits the mixture for each candidate K, computes WCSS from hard labels,
    retries once with a fresh seed where WCSS fails to decrease, and returns
    the interior K maximizing the second difference
    WCSS(K-1) - 2 WCSS(K) + WCSS(K+1), ties toward smaller K. When the
    curve has no usable kink (max second difference under 5% of the first
    WCSS) the elbow is flagged weak and K falls back to the smallest
    interior candidate.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    ks = list(k_range)
    if len(ks) < 3:
        raise ValueError("k_range needs at least 3 candidates for an interior elbow")
    if max(ks) >= x.shape[0]:
        raise ValueError("largest K must be below the number of points")

    wcss = {}
    for k in ks:
        model = em_fit(x, k, seed=seed)
        wcss[k] = _wcss(x, assign(model, x))
    for i, k in enumerate(ks[1:], start=1):
        if wcss[k] > wcss[ks[i - 1]]:
            model = em_fit(x, k, seed=seed + 1000 + k)
            wcss[k] = min(wcss[k], _wcss(x, assign(model, x)))

    second = {
        ks[i]: wcss[ks[i - 1]] - 2.0 * wcss[ks[i]] + wcss[ks[i + 1]]
        for i in range(1, len(ks) - 1)
    }
    k_star = max(sorted(second), key=lambda k: (second[k], -k))
    weak = max(second.values()) < 0.05 * wcss[ks[0]]
    if weak:
        k_star = ks[1]
    return ElbowResult(
        k=int(k_star),
        k_range=tuple(ks),
        wcss=tuple(wcss[k] for k in ks),
        weak_elbow=bool(weak),
    )


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two hard partitions."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must be 1-D and equally long")
    n = a.size
    cats_a, inv_a = np.unique(a, return_inverse=True)
    cats_b, inv_b = np.unique(b, return_inverse=True)
    table = np.zeros((cats_a.size, cats_b.size), dtype=np.int64)
    np.add.at(table, (inv_a, inv_b), 1)
    sum_cells = sum(comb(int(x), 2) for x in table.ravel())
    sum_rows = sum(comb(int(x), 2) for x in table.sum(axis=1))
    sum_cols = sum(comb(int(x), 2) for x in table.sum(axis=0))
    total = comb(n, 2)
    if total == 0:
        return 1.0
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
