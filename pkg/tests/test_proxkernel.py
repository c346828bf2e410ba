"""Unit tests for offgrid.proxkernel."""

import math

import numpy as np
import pytest

from offgrid.errors import AssumptionViolation, DomainError
from offgrid.proxkernel import (
    GaussianProx,
    SincProx,
    constants_table,
    delta_separation,
    epsilon_of,
    h_infinity_bounds,
    lipschitz_constants,
    nu_of,
    prox_for,
    prox_kernel_derivative,
    separation_requirement,
    validity_cap,
)

PRESETS = [GaussianProx(), SincProx()]


def test_g_inf_of_presets():
    """g_inf = -F''(0): 1/2 for the Gaussian, pi^2/3 for sinc."""
    assert GaussianProx().g_inf == pytest.approx(0.5, abs=1e-14)
    assert SincProx().g_inf == pytest.approx(math.pi**2 / 3, rel=1e-12)


@pytest.mark.parametrize("pf", PRESETS)
def test_F_is_even_with_unit_peak(pf):
    """F(0) = 1 and F(x) = F(-x)."""
    x = np.linspace(0.05, 5.0, 40)
    assert float(pf.F(0.0)) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(pf.F(x), pf.F(-x), atol=1e-14)


@pytest.mark.parametrize("pf", PRESETS)
def test_F_derivatives_match_finite_differences(pf):
    """Each analytic derivative matches a central difference of the one below."""
    x = np.concatenate([np.linspace(0.05, 3.0, 31), [2 / math.pi - 1e-3, 2 / math.pi + 1e-3]])
    eps = 1e-5
    for order in range(1, 7):
        fd = (pf.F(x + eps, order - 1) - pf.F(x - eps, order - 1)) / (2 * eps)
        exact = pf.F(x, order)
        assert np.max(np.abs(fd - exact)) <= 1e-6 * np.max(np.abs(exact))


@pytest.mark.parametrize("pf", PRESETS)
def test_envelopes_dominate_derivatives(pf):
    """envelope_i(r) >= |F^(i)(x)| for all probes |x| >= r."""
    x = np.linspace(0.0, 80.0, 16001)
    for order in range(4):
        vals = np.abs(pf.F(x, order))
        for r in (0.0, 0.3, 1.0, 2.5, 7.0, 63.9, 70.0):
            assert pf.envelope(order, r) >= vals[x >= r].max() - 1e-12


def test_prox_kernel_derivative_values():
    """K_prox(theta, theta) = 1 and the transpose identity holds."""
    pf = GaussianProx()
    assert float(prox_kernel_derivative(pf, 0.3, 0.2, 0.2, 0, 0)) == pytest.approx(1.0)
    for pf in PRESETS:
        for i in range(4):
            for j in range(4):
                a = prox_kernel_derivative(pf, 0.2, 0.1, 0.45, i, j)
                b = prox_kernel_derivative(pf, 0.2, 0.45, 0.1, j, i)
                assert float(a) == pytest.approx(float(b), rel=1e-12, abs=1e-14)


def test_prox_kernel_derivative_wraps_on_torus():
    """On the torus 0.95 and 0.05 are 0.1 apart."""
    pf = SincProx()
    a = prox_kernel_derivative(pf, 1 / 31, 0.95, 0.05, 0, 0, torus=True)
    b = prox_kernel_derivative(pf, 1 / 31, -0.05, 0.05, 0, 0)
    assert float(a) == pytest.approx(float(b), abs=1e-12)


def test_epsilon_closed_forms():
    """Gaussian epsilon(1) = 1 - exp(-1/4); sinc epsilon(r) = 1 - sinc(r) near the origin."""
    assert epsilon_of(GaussianProx(), 1.0) == pytest.approx(0.221199216928595, abs=1e-12)
    r = 0.3
    assert epsilon_of(SincProx(), r) == pytest.approx(1 - math.sin(math.pi * r) / (math.pi * r), abs=1e-12)
    with pytest.raises(DomainError):
        epsilon_of(GaussianProx(), 0.0)


def test_nu_gaussian_closed_form():
    """Gaussian nu(r) = (1 - r^2/2) exp(-r^2/4)."""
    for r in (0.3, 0.8, 1.2):
        assert nu_of(GaussianProx(), r) == pytest.approx((1 - r * r / 2) * math.exp(-r * r / 4), abs=1e-10)


def test_epsilon_and_nu_monotone():
    """epsilon is nondecreasing, nu nonincreasing on its positive range."""
    pf = GaussianProx()
    rs = np.linspace(0.1, 1.3, 13)
    eps = [epsilon_of(pf, r) for r in rs]
    nus = [nu_of(pf, r) for r in rs]
    assert all(b >= a - 1e-15 for a, b in zip(eps, eps[1:]))
    assert all(b <= a + 1e-15 for a, b in zip(nus, nus[1:]))


def test_delta_single_feature_is_zero():
    """s = 1 gives an empty sum."""
    assert delta_separation(GaussianProx(), 0.01, 1) == 0.0


def test_delta_monotone_in_u_and_s():
    """Doubling u never increases delta; more features never decrease it."""
    pf = GaussianProx()
    d8 = delta_separation(pf, 0.01, 8)
    assert math.isfinite(d8) and d8 > 0
    assert delta_separation(pf, 0.02, 8) <= d8
    values = [delta_separation(pf, 0.01, s) for s in (2, 4, 8, 16, 64)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert math.isfinite(values[-1])


def test_delta_rejects_bad_arguments():
    """u must be positive and s at least 1."""
    with pytest.raises(DomainError):
        delta_separation(GaussianProx(), 0.0, 3)
    with pytest.raises(DomainError):
        delta_separation(GaussianProx(), 0.1, 0)


def test_h_infinity_bounds_term_by_term():
    """Gaussian, r = 0.4: H1 and H2 equal their minima evaluated independently."""
    pf = GaussianProx()
    r = 0.4
    c = h_infinity_bounds(pf, r)
    eps = 1 - math.exp(-((r / 2) ** 2) / 4)
    nu = (1 - (2 * r) ** 2 / 2) * math.exp(-((2 * r) ** 2) / 4)
    L = lipschitz_constants(pf)
    assert c.eps_half_r == pytest.approx(eps, abs=1e-12)
    assert c.nu_two_r == pytest.approx(nu, abs=1e-10)
    assert c.H1 == pytest.approx(min(0.5, L[2], L[3], L[4], L[6], nu / 10, eps / 10), rel=1e-9)
    assert c.H2 == pytest.approx(min(1 / 6, 8 * eps / (10 * (5 + 2 * L[1])), 8 * nu / (9 * (2 * L[2] + 2 * L[3] + 4))), rel=1e-9)
    assert c.H1 <= 0.5 and c.H2 <= 1 / 6


def test_lipschitz_constants_gaussian():
    """L_0 = 1, L_2 = 1 and L_6 = g_inf^-3 |F^(6)(0)| for the Gaussian."""
    L = lipschitz_constants(GaussianProx())
    assert sorted(L) == [0, 1, 2, 3, 4, 6]
    assert L[0] == pytest.approx(1.0)
    assert L[2] == pytest.approx(1.0)
    # F^(6)(0) = -2^-3 He_6(0) = 15/8
    assert L[6] == pytest.approx(8 * 15 / 8)


def test_h_infinity_bounds_sinc_outside_validity():
    """Sinc with 2r past the first zero of F'' fails on nu(2r)."""
    with pytest.raises(AssumptionViolation, match="nu"):
        h_infinity_bounds(SincProx(), 0.35)


def test_validity_cap_enforced():
    """r at or above 0.99/sqrt(2 g_inf L_2) is rejected."""
    pf = GaussianProx()
    assert validity_cap(pf) == pytest.approx(0.99)
    with pytest.raises((DomainError, AssumptionViolation)):
        h_infinity_bounds(pf, 1.0)


def test_separation_requirement():
    """s = 1 reduces to 4 r / sqrt(g_inf); Sigma is nondecreasing in s."""
    pf = GaussianProx()
    assert separation_requirement(pf, 0.5, 0.4, 1) == pytest.approx(4 * 0.4 / math.sqrt(0.5))
    sig = [separation_requirement(pf, 0.5, 0.4, s) for s in (1, 2, 4)]
    assert all(math.isfinite(v) for v in sig)
    assert sig[0] <= sig[1] <= sig[2]


def test_constants_table_rows():
    """The constants dump lists g_inf, the L_i and the separation quantities."""
    names = [name for name, _ in constants_table(GaussianProx(), 0.5, 0.4, 3)]
    for key in ("g_inf", "L0", "L6", "H1", "H2", "Sigma", "epsilon(r/2)", "nu(2r)"):
        assert key in names


def test_prox_for_presets():
    """Presets resolve by name; unknown names raise."""
    assert isinstance(prox_for("gaussian"), GaussianProx)
    assert isinstance(prox_for("dirichlet"), SincProx)
    with pytest.raises(DomainError):
        prox_for("shannon")
