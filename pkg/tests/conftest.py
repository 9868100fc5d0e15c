"""Shared fixtures: synthetic samples with known generating structure.

Everything here is seeded, so downstream tests can freeze values computed
from these objects and expect bit-identical reruns.
"""

import datetime as dt
import warnings

import numpy as np
import pytest

from fdakit.fpca import FpcaConfig, fit_pace
from fdakit.fts import segment
from fdakit.funcdata import IrregularFunctionalDataset, SmootherConfig

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL summary line for an acceptance check."""

    def check(ok, detail):
        verdict = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"{request.node.name}: {verdict} ({detail})")
        assert ok, detail

    return check


def standardized_scores(rng, n, scales):
    """Draw n score vectors whose empirical covariance is exactly diag(scales^2).

    Whitening the draws removes Monte Carlo wobble from the sample spectrum,
    so eigenvalue recovery tests measure the estimator, not the draw.
    """
    z = rng.normal(0.0, 1.0, (n, len(scales)))
    z -= z.mean(axis=0)
    z = z @ np.linalg.inv(np.linalg.cholesky(np.cov(z.T, ddof=1))).T
    return z * np.asarray(scales, dtype=float)


@pytest.fixture(scope="session")
def rank2_sample():
    """Dense rank-2 Gaussian process sample with a (4, 1) spectrum.

    mean 1 + 2t, components sqrt(2)sin(pi t) and sqrt(2)cos(pi t) on [0, 1],
    200 subjects observed on a common 60-point grid with noise sd 0.1.
    """
    rng = np.random.default_rng(42)
    t = np.linspace(0.0, 1.0, 60)
    phi1 = np.sqrt(2.0) * np.sin(np.pi * t)
    phi2 = np.sqrt(2.0) * np.cos(np.pi * t)
    xi = standardized_scores(rng, 200, (2.0, 1.0))
    curves = 1.0 + 2.0 * t + xi @ np.vstack([phi1, phi2])
    curves += rng.normal(0.0, 0.1, curves.shape)
    data = IrregularFunctionalDataset(
        [(i, t, curves[i]) for i in range(200)], domain=(0.0, 1.0)
    )
    return {
        "data": data,
        "xi": xi,
        "t": t,
        "phi1": lambda u: np.sqrt(2.0) * np.sin(np.pi * u),
        "phi2": lambda u: np.sqrt(2.0) * np.cos(np.pi * u),
        "mean": lambda u: 1.0 + 2.0 * u,
        "noise_sd": 0.1,
    }


@pytest.fixture(scope="session")
def rank2_model(rank2_sample):
    """The rank-2 sample fit with a 0.99 variance threshold (selects K=2)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit_pace(
            rank2_sample["data"],
            SmootherConfig(grid_size=51),
            FpcaConfig(fve_threshold=0.99),
        )


@pytest.fixture(scope="session")
def growth_segments():
    """12 overlapping 14-day count segments from a smooth growth path.

    Daily growth oscillates around 3 percent with small multiplicative
    noise, enough history for an 8-curve training window plus 4 folds.
    """
    rng = np.random.default_rng(21)
    n_days = 14 + 13 * 11
    r_true = 3.0 + 0.8 * np.sin(np.linspace(0.0, 3.0 * np.pi, n_days))
    counts = 1000.0 * np.exp(
        np.cumsum(r_true) / 100.0 + np.cumsum(rng.normal(0.0, 0.004, n_days))
    )
    return segment(counts)


def write_panel(cases_path, pop_path, n_days=120, seed=77):
    """Write a synthetic state-level cumulative case panel in NYT layout."""
    rng = np.random.default_rng(seed)
    states = [
        "Alabama", "Arizona", "California", "Colorado", "Florida",
        "Georgia", "Illinois", "New Jersey", "New York", "Ohio",
        "Texas", "Washington",
    ]
    pops = {s: int(rng.uniform(2e6, 3.9e7)) for s in states}
    pops["Guam"] = 165718
    start = dt.date(2020, 3, 1)
    rows = []
    for si, s in enumerate(states + ["Guam"]):
        lag = rng.integers(0, 10)
        base = rng.uniform(2.5, 4.0)
        wobble = rng.normal(0.0, 0.01, n_days)
        cum = 20.0
        for d in range(n_days):
            day = start + dt.timedelta(days=d)
            if d < lag:
                continue
            growth = base * (1.0 + 0.5 * np.sin(2.0 * np.pi * d / 60.0 + si)) / 100.0
            cum *= np.exp(growth + wobble[d])
            if rng.random() < 0.01 and d > 20:
                cum *= 0.98
            rows.append((day.isoformat(), s, 1 + si, int(cum), int(cum * 0.03)))
    rows.sort()
    with open(cases_path, "w") as f:
        f.write("date,state,fips,cases,deaths\n")
        for r in rows:
            f.write(",".join(map(str, r)) + "\n")
    with open(pop_path, "w") as f:
        f.write("state,population\n")
        for s in sorted(pops):
            f.write(f"{s},{pops[s]}\n")
    return start, start + dt.timedelta(days=n_days - 1)


@pytest.fixture(scope="session")
def panel_paths(tmp_path_factory):
    """Paths to a 120-day synthetic case panel and its population table."""
    root = tmp_path_factory.mktemp("panel")
    cases = root / "cases.csv"
    pop = root / "pop.csv"
    first, last = write_panel(cases, pop)
    return {"cases": str(cases), "pop": str(pop), "first": first, "last": last}
