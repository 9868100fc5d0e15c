"""Local-linear smoother behavior: exactness, GCV, binning, containers."""

import numpy as np
import pytest

from fdakit.funcdata import (
    BandwidthWidenedWarning,
    GridCurve,
    IrregularFunctionalDataset,
    SmootherConfig,
    epanechnikov,
    make_grid,
    quadrature_weights,
    smooth_curve,
    smooth_surface,
)


def test_epanechnikov_hand_values():
    assert epanechnikov(np.array([0.0]))[0] == pytest.approx(0.75)
    assert epanechnikov(np.array([0.5]))[0] == pytest.approx(0.5625)
    assert epanechnikov(np.array([1.0]))[0] == 0.0
    assert epanechnikov(np.array([-2.0]))[0] == 0.0
    x = np.linspace(-1.5, 1.5, 31)
    np.testing.assert_allclose(epanechnikov(x), epanechnikov(-x))


def test_make_grid_and_quadrature_weights():
    g = make_grid((0.0, 2.0), 5)
    np.testing.assert_allclose(g, [0.0, 0.5, 1.0, 1.5, 2.0])
    w = quadrature_weights(g)
    np.testing.assert_allclose(w, [0.25, 0.5, 0.5, 0.5, 0.25])
    assert w.sum() == pytest.approx(2.0)
    # trapezoid weights integrate a linear function exactly
    assert np.sum(w * (3.0 + 2.0 * g)) == pytest.approx(3.0 * 2.0 + 4.0 / 2.0 * 2.0)


def test_line_reproduced_exactly():
    rng = np.random.default_rng(7)
    t = np.sort(rng.uniform(0.0, 1.0, 80))
    y = 2.0 + 3.0 * t
    fit = smooth_curve((t, y), SmootherConfig(bandwidth=0.3), make_grid((0.0, 1.0), 41))
    np.testing.assert_allclose(fit.values, 2.0 + 3.0 * fit.grid, atol=1e-10)


def test_tuple_and_array_inputs_agree():
    rng = np.random.default_rng(7)
    t = np.sort(rng.uniform(0.0, 1.0, 50))
    y = np.sin(t)
    g = make_grid((0.0, 1.0), 21)
    a = smooth_curve((t, y), SmootherConfig(bandwidth=0.25), g)
    b = smooth_curve(np.column_stack([t, y]), SmootherConfig(bandwidth=0.25), g)
    np.testing.assert_array_equal(a.values, b.values)


def test_gcv_tracks_noisy_sine():
    rng = np.random.default_rng(7)
    rng.uniform(0.0, 1.0, 80)  # keep draw order aligned with the line test
    t = np.sort(rng.uniform(0.0, 1.0, 100))
    y = np.sin(2.0 * np.pi * t) + rng.normal(0.0, 0.2, t.size)
    fit = smooth_curve((t, y), SmootherConfig(bandwidth="auto"), make_grid((0.0, 1.0), 101))
    rmse = np.sqrt(np.mean((fit.values - np.sin(2.0 * np.pi * fit.grid)) ** 2))
    assert rmse < 0.2


def test_narrow_bandwidth_widened_with_warning():
    t = np.array([0.0, 0.3, 0.6, 1.0])
    y = 2.0 * t
    with pytest.warns(BandwidthWidenedWarning):
        fit = smooth_curve((t, y), SmootherConfig(bandwidth=0.001), make_grid((0.0, 1.0), 11))
    np.testing.assert_allclose(fit.values, 2.0 * fit.grid, atol=1e-10)


def test_binned_path_keeps_linear_exactness():
    rng = np.random.default_rng(7)
    t = np.sort(rng.uniform(0.0, 1.0, 2500))  # above the binning threshold
    y = 1.0 - 2.0 * t
    fit = smooth_curve((t, y), SmootherConfig(bandwidth=0.2), make_grid((0.0, 1.0), 41))
    np.testing.assert_allclose(fit.values, 1.0 - 2.0 * fit.grid, atol=1e-9)


def test_surface_reproduces_symmetric_plane():
    rng = np.random.default_rng(7)
    s = rng.uniform(0.0, 1.0, 300)
    t = rng.uniform(0.0, 1.0, 300)
    g = make_grid((0.0, 1.0), 21)
    m = smooth_surface((s, t, s + t), SmootherConfig(bandwidth=0.4, grid_size=21), g)
    ss, tt = np.meshgrid(g, g, indexing="ij")
    np.testing.assert_allclose(m, ss + tt, atol=1e-9)
    np.testing.assert_allclose(m, m.T, atol=1e-12)


def test_surface_recovers_rank_one_product():
    rng = np.random.default_rng(7)
    n = 900
    s = rng.uniform(0.0, 1.0, n)
    t = rng.uniform(0.0, 1.0, n)
    phi = lambda u: np.sqrt(2.0) * np.cos(np.pi * u)
    z = phi(s) * phi(t) + rng.normal(0.0, 0.1, n)
    g = make_grid((0.0, 1.0), 21)
    m = smooth_surface((s, t, z), SmootherConfig(bandwidth="auto", grid_size=21), g)
    ss, tt = np.meshgrid(g, g, indexing="ij")
    assert np.abs(m - phi(ss) * phi(tt)).max() < 0.3


def test_grid_curve_validation():
    with pytest.raises(ValueError):
        GridCurve(np.array([0.0, 0.5, 0.4]), np.zeros(3))
    with pytest.raises(ValueError):
        GridCurve(np.array([0.0, 1.0]), np.zeros(3))


def test_dataset_validation():
    t = np.array([0.0, 0.5, 1.0])
    with pytest.raises(ValueError, match="at least 2"):
        IrregularFunctionalDataset([("a", [0.5], [1.0])], domain=(0.0, 1.0))
    with pytest.raises(ValueError, match="strictly increasing"):
        IrregularFunctionalDataset([("a", [0.5, 0.5], [1.0, 2.0])], domain=(0.0, 1.0))
    with pytest.raises(ValueError, match="outside domain"):
        IrregularFunctionalDataset([("a", [0.0, 2.0], [1.0, 2.0])], domain=(0.0, 1.0))
    with pytest.raises(ValueError, match="mismatch"):
        IrregularFunctionalDataset([("a", t, [1.0, 2.0])], domain=(0.0, 1.0))
    data = IrregularFunctionalDataset(
        [("a", t, t), ("b", t, 2.0 * t)], domain=(0.0, 1.0)
    )
    assert len(data) == 2
    assert data.ids() == ["a", "b"]
    pooled_t, pooled_y = data.pooled_points()
    assert pooled_t.size == 6
    assert np.all(np.diff(pooled_t) >= 0)
    assert pooled_y.size == 6
