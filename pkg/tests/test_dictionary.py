"""Unit tests for offgrid.dictionary."""

import math

import numpy as np
import pytest

from offgrid.dictionary import (
    Dictionary,
    DirichletFamily,
    GaussianFamily,
    ObservationMeasure,
    empirical_kernel,
    inner_product,
    metric_distance,
    normalized_feature,
    scan_points,
    wrap_offset,
)
from offgrid.errors import DegenerateFeatureError, DomainError, StructuralError
from offgrid.presets import gaussian_dictionary, lowpass_dictionary, torus_dictionary


def _dense_gaussian(sigma=1.0, b=12.0, delta=1e-3, window=(-2.0, 2.0)) -> Dictionary:
    T = int(round(2 * b / delta))
    return Dictionary(GaussianFamily(sigma, window), ObservationMeasure.regular_grid(-b, b, T))


def test_inner_product_constant_on_grid():
    """Constant 1 on a 4-point grid with Delta = 0.5 has squared norm equal to the total mass 2."""
    mu = ObservationMeasure.regular_grid(0.0, 2.0, 4)
    assert mu.weight == 0.5
    assert inner_product(np.ones(4), np.ones(4), mu) == pytest.approx(2.0, abs=1e-15)


def test_inner_product_matches_scalar_sum():
    """Random functions on T = 16 match a direct summation oracle."""
    rng = np.random.default_rng(0)
    mu = ObservationMeasure.regular_grid(-1.0, 1.0, 16)
    f, g = rng.standard_normal(16), rng.standard_normal(16)
    oracle = sum(mu.weight * a * b for a, b in zip(f, g))
    assert inner_product(f, g, mu) == pytest.approx(oracle, abs=1e-12)
    assert math.sqrt(inner_product(f, f, mu)) == pytest.approx(math.sqrt(mu.weight) * np.linalg.norm(f), rel=1e-12)


def test_inner_product_dimension_mismatch():
    """Functions sampled on a different measure are rejected."""
    mu = ObservationMeasure.regular_grid(0.0, 1.0, 8)
    with pytest.raises(StructuralError):
        inner_product(np.ones(8), np.ones(7), mu)


def test_basis_measure_requires_odd_size():
    """The real Fourier basis only exists for odd sizes."""
    with pytest.raises(DomainError):
        ObservationMeasure.fourier_basis(30)


def test_gaussian_lebesgue_norm_is_one():
    """h(., sigma) has unit continuum L2 norm."""
    assert GaussianFamily(0.7, (-1.0, 1.0)).lebesgue_norm() == pytest.approx(1.0, abs=1e-8)
    assert DirichletFamily(15).lebesgue_norm() == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("fam", [GaussianFamily(0.8, (-1.0, 1.0)), DirichletFamily(11)])
def test_family_derivatives_match_finite_differences(fam):
    """Analytic derivatives of h agree with central differences."""
    t = np.linspace(-0.4, 0.4, 17) + 0.013
    eps = 1e-5
    for order in (1, 2, 3):
        fd = (fam.h(t + eps, order - 1) - fam.h(t - eps, order - 1)) / (2 * eps)
        exact = fam.h(t, order)
        scale = np.max(np.abs(exact))
        assert np.max(np.abs(fd - exact)) <= 1e-6 * scale


def test_normalized_feature_unit_norm_and_orthogonal_derivative():
    """phi_T has unit norm and is orthogonal to its first derivative."""
    d = gaussian_dictionary(256, math.log(256), 1 / math.sqrt(0.5 * math.log(256)))
    feat = d.feature(0.3)
    assert d.norm(feat.values) == pytest.approx(1.0, abs=1e-10)
    assert abs(float(d.inner(feat.values, feat.d1))) <= 1e-8


def test_dirichlet_derivative_matches_finite_differences():
    """On the torus with T = 31, d1 matches central differences of phi_T."""
    d = torus_dictionary(31)
    theta, eps = 0.3, 1e-6
    fd = (d.features([theta + eps])[0] - d.features([theta - eps])[0]) / (2 * eps)
    d1 = d.feature(theta).d1
    assert np.max(np.abs(fd - d1)) <= 1e-6 * np.max(np.abs(d1))


def test_gaussian_dense_grid_kernel_matches_continuum():
    """sigma = 1, dense grid: K_T(0, u) is close to exp(-u^2/4)."""
    d = _dense_gaussian()
    u = 0.7
    assert float(d.kernel([0.0], [u])[0, 0]) == pytest.approx(math.exp(-u * u / 4), abs=1e-3)


def test_degenerate_feature_raises():
    """A Gaussian far from every grid point has zero empirical norm."""
    fam = GaussianFamily(1e-3, (50.0, 60.0))
    mu = ObservationMeasure.regular_grid(0.0, 1.0, 8)
    with pytest.raises(DegenerateFeatureError):
        normalized_feature(fam, mu, 55.0)


def test_kernel_diagonal_identities():
    """K_T(theta, theta) = 1 and K_T^[1,1](theta, theta) = 1."""
    for d in (torus_dictionary(31), gaussian_dictionary(256, math.log(256), 0.6)):
        th = np.array([0.1, 0.2, 0.35])
        assert np.allclose(np.diag(d.kernel(th, th)), 1.0, atol=1e-12)
        assert np.allclose(np.diag(d.kernel(th, th, 1, 1)), 1.0, atol=1e-8)


def test_dirichlet_kernel_closed_form():
    """Low-pass, T = 31: K_T(theta, theta') = sin(T pi x)/(T sin(pi x))."""
    d = lowpass_dictionary(31)
    th, tp = 0.21, np.array([0.3, 0.55, 0.8, 0.211])
    x = th - tp
    expected = np.sin(31 * math.pi * x) / (31 * np.sin(math.pi * x))
    assert np.allclose(d.kernel([th], tp)[0], expected, atol=1e-10)


def test_kernel_symmetry_and_cauchy_schwarz():
    """K^[i,j](a, b) = K^[j,i](b, a) and |K| <= 1."""
    d = gaussian_dictionary(128, math.log(128), 0.7)
    a, b = np.array([-1.0, 0.2]), np.array([0.5, 1.1, -0.3])
    for i in range(4):
        for j in range(4):
            assert np.allclose(d.kernel(a, b, i, j), d.kernel(b, a, j, i).T, atol=1e-10)
    assert np.all(np.abs(d.kernel(a, b)) <= 1 + 1e-12)


def test_kernel_derivative_consistency():
    """d/dtheta K_T(theta, theta') = sqrt(g_T(theta)) K_T^[1,0](theta, theta')."""
    d = gaussian_dictionary(256, math.log(256), 0.6)
    th, tp, eps = 0.4, 1.0, 1e-5
    fd = (d.kernel([th + eps], [tp])[0, 0] - d.kernel([th - eps], [tp])[0, 0]) / (2 * eps)
    g, _, _ = d.g_values([th])
    analytic = math.sqrt(g[0]) * d.kernel([th], [tp], 1, 0)[0, 0]
    assert fd == pytest.approx(analytic, rel=1e-5)


def test_h_kernel_is_nonnegative():
    """h_K(theta) = K^[3,3](theta, theta) is a squared norm."""
    d = torus_dictionary(64, 31)
    th = np.linspace(0, 1, 9, endpoint=False)
    assert np.all(np.diag(d.kernel(th, th, 3, 3)) >= 0)


def test_dirichlet_metric_is_constant():
    """Low-pass: g_T = g_inf (T^2 - 1) everywhere."""
    d = lowpass_dictionary(31)
    g, g1, _ = d.g_values(np.linspace(0, 1, 13, endpoint=False))
    expected = math.pi**2 / 3 * (31**2 - 1)
    assert np.allclose(g, expected, rtol=1e-6)
    assert np.max(np.abs(g1)) <= 1e-6 * expected


def test_metric_distance_lowpass_closed_form():
    """Low-pass, T = 31: d_T is sqrt(g_inf (T^2 - 1)) |theta - theta'|."""
    d = lowpass_dictionary(31)
    acc = d.metric()
    rate = math.sqrt(math.pi**2 / 3 * (31**2 - 1))
    assert metric_distance(acc, 0.1, 0.1) == 0.0
    assert metric_distance(acc, 0.1, 0.3) == pytest.approx(rate * 0.2, rel=1e-6)
    # torus representatives: 0.95 and 0.05 are 0.1 apart
    assert metric_distance(acc, 0.95, 0.05) == pytest.approx(rate * 0.1, rel=1e-6)


def test_metric_distance_gaussian_small_offset():
    """Dense Gaussian grid: d_T(0, u) is about sqrt(g_inf) u / sigma."""
    d = _dense_gaussian(window=(-1.0, 1.0))
    u = 0.05
    assert metric_distance(d.metric(), 0.0, u) == pytest.approx(math.sqrt(0.5) * u, rel=1e-2)


def test_metric_distance_properties_and_domain():
    """Symmetry, triangle inequality, and a domain error outside the window."""
    d = gaussian_dictionary(128, math.log(128), 0.7)
    acc = d.metric()
    a, b, c = -1.0, 0.4, 1.5
    assert metric_distance(acc, a, b) == pytest.approx(metric_distance(acc, b, a))
    assert metric_distance(acc, a, c) <= metric_distance(acc, a, b) + metric_distance(acc, b, c) + 1e-12
    with pytest.raises(DomainError):
        metric_distance(acc, 0.0, 100.0)


def test_empirical_kernel_function_entry_point():
    """empirical_kernel agrees with the Dictionary method."""
    fam, mu = DirichletFamily(31), ObservationMeasure.fourier_basis(31)
    assert empirical_kernel(fam, mu, 0.2, 0.2) == pytest.approx(1.0, abs=1e-12)


def test_structural_mismatches():
    """Families must match the measure's domain and representation."""
    with pytest.raises(StructuralError):
        Dictionary(GaussianFamily(1.0, (-1.0, 1.0)), ObservationMeasure.torus_grid(16))
    with pytest.raises(StructuralError):
        Dictionary(DirichletFamily(15), ObservationMeasure.fourier_basis(17)).features([0.1])


def test_scan_points_nested_and_covering():
    """Halving the step gives a superset; real-line grids include both ends."""
    coarse = scan_points((-1.0, 1.0), 0.1)
    fine = scan_points((-1.0, 1.0), 0.05)
    assert coarse[0] == -1.0 and coarse[-1] == pytest.approx(1.0)
    assert all(np.min(np.abs(fine - x)) < 1e-12 for x in coarse)
    torus = scan_points((0.0, 1.0), 0.25, torus=True)
    assert np.allclose(torus, [0.0, 0.25, 0.5, 0.75])
    with pytest.raises(DomainError):
        scan_points((0.0, 1.0), 0.0)


def test_wrap_offset_range():
    """Offsets wrap into [-1/2, 1/2)."""
    assert np.allclose(wrap_offset([0.9, -0.7, 0.5]), [-0.1, 0.3, -0.5])


def test_check_locations_window():
    """Locations outside Theta_T raise on the real line and wrap on the torus."""
    d = gaussian_dictionary(64, math.log(64), 0.8)
    with pytest.raises(DomainError):
        d.check_locations([10.0])
    assert np.allclose(torus_dictionary(31).check_locations([1.25]), [0.25])
