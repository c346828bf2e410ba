"""Unit tests for offgrid.hypotest."""

import math

import numpy as np
import pytest

from offgrid.errors import DomainError, PreconditionError
from offgrid.hypotest import (
    NullSpec,
    TestConstants,
    TestParams,
    discrepancy,
    null_certificate,
    rho1,
    rho2,
    rho3,
    rho_min,
    risk_bound_T1,
    run_test,
    stat_T1,
    stat_T2,
    stat_T3,
    sup_noise_tail_bound,
    support_contained,
    threshold_T1,
)
from offgrid.noise import NoiseModel
from offgrid.presets import gaussian_dictionary, lowpass_dictionary
from offgrid.signal import Mixture, observe, synthesize
from offgrid.solver import FitResult, SolverConfig

N_NULL = 5000


@pytest.fixture
def dictionary():
    return gaussian_dictionary(256, math.log(256), 0.5)


@pytest.fixture
def null(dictionary):
    return NullSpec(Mixture.build([1.0, -0.5], [-1.5, 1.0], dictionary))


def _fitted(m: Mixture) -> FitResult:
    return FitResult(mixture=m, objective=0.0)


def test_null_spec_validation():
    """Zero coefficients and bad signs are rejected; detection has s0 = 0."""
    assert NullSpec.detection().s0 == 0
    with pytest.raises(DomainError):
        NullSpec(Mixture.relaxed([0.0], [0.1]))
    with pytest.raises(DomainError):
        NullSpec.signed_support([0.1, 0.2], [1.0, 0.5])
    ns = NullSpec.signed_support([0.1, 0.5], [1.0, -1.0])
    assert np.array_equal(ns.v, [1.0, -1.0])


def test_T1_is_centered_under_the_null(dictionary, null):
    """E[T1] = 0 when y is the null mixture plus noise."""
    nm = NoiseModel.grid_white(dictionary.measure, 1.0)
    stats = np.array([stat_T1(observe(null.mixture, dictionary, nm, 11, k), null, dictionary, nm) for k in range(N_NULL)])
    assert abs(stats.mean()) <= 4 * math.sqrt(nm.xi_var / N_NULL)
    clean = synthesize(null.mixture, dictionary)
    assert stat_T1(clean, null, dictionary, nm) == pytest.approx(-nm.expected_sq_norm)


def test_T2_zero_for_exact_fit(dictionary, null):
    """A fit equal to the null mixture gives T2 = 0."""
    y = synthesize(null.mixture, dictionary)
    assert stat_T2(y, null, dictionary, SolverConfig(), _fitted(null.mixture)) == pytest.approx(0.0, abs=1e-20)


def test_T3_vanishes_on_the_null_support(dictionary, null):
    """Mixtures on the null anchors with matching signs have l1 norm equal to <y, p0>."""
    m = Mixture.build([2.0, -0.25], null.anchors, dictionary)
    y = synthesize(m, dictionary)
    stat = stat_T3(y, null, dictionary, SolverConfig(), null_certificate(null, dictionary), _fitted(m))
    assert stat == pytest.approx(0.0, abs=1e-9)


def test_T3_detection_is_the_l1_norm(dictionary):
    """With an empty null p0 = 0 and T3 = ||beta_hat||_1."""
    m = Mixture.build([0.7, -0.2], [0.0, 1.0], dictionary)
    y = synthesize(m, dictionary)
    assert stat_T3(y, NullSpec.detection(), dictionary, SolverConfig(), fit_result=_fitted(m)) == pytest.approx(0.9)


def test_threshold_and_risk_bound_T1():
    """t = rho^2/2; the risk bound needs rho^2 > t > 0."""
    d = lowpass_dictionary(31)
    nm = NoiseModel.truncated_white(d.measure, 1.0)
    assert threshold_T1(4.0) == 8.0
    bound = risk_bound_T1(4.0, 8.0, nm)
    assert 0 < bound <= 2
    assert risk_bound_T1(8.0, 32.0, nm) < bound
    with pytest.raises(DomainError):
        risk_bound_T1(1.0, 2.0, nm)


def test_rho1_formula():
    """rho1 is the larger of the dense and the tail terms."""
    d = lowpass_dictionary(31)
    nm = NoiseModel.truncated_white(d.measure, 1.0)
    alpha = 0.1
    expected = max((40 * nm.xi_var / alpha) ** 0.25, 8 * math.sqrt(2 * nm.delta * math.log(2 / alpha)))
    assert rho1(alpha, nm) == pytest.approx(expected)
    with pytest.raises(DomainError):
        rho1(1.5, nm)


def test_rho2_and_rho3_defaults():
    """C0 = C3 = 1 and C_N = C_F = 1: closed-form thresholds and separations."""
    consts = TestConstants()
    r2 = rho2(0.1, 2, 1, 0.1, consts)
    assert r2.t == pytest.approx(0.01)
    assert r2.rho == pytest.approx(math.sqrt(2) * 0.1 + 0.1)
    assert math.isnan(r2.closed_form)
    r3 = rho3(0.1, 2, 1, 0.1, consts)
    assert r3.t == pytest.approx(0.2)
    assert r3.rho == pytest.approx(2 * 2 * 0.1 + 2 * 0.2)


def test_rate_closed_forms_and_warnings():
    """Geometry enables the closed form; a window narrower than sigma warns."""
    d = lowpass_dictionary(31)
    nm = NoiseModel.truncated_white(d.measure, 1.0)
    r2 = rho2(0.1, 3, 1, 0.1, TestConstants(), nm, width=1.0, sigma=1 / 31)
    assert r2.closed_form > 0 and not r2.warnings
    r3 = rho3(0.1, 3, 1, 0.1, TestConstants(), nm, width=0.01, sigma=1 / 31)
    assert r3.warnings


def test_rho_min_binding():
    """The smaller of the dense and sparse rates is reported with its regime."""
    d = lowpass_dictionary(31)
    nm = NoiseModel.truncated_white(d.measure, 1.0)
    rm = rho_min(0.1, 1, 0, nm, width=1.0, sigma=1 / 31)
    assert rm.value == min(rm.dense, rm.sparse)
    assert rm.binding in ("dense", "sparse")
    assert rm.dense == pytest.approx((80 * nm.xi_var / 0.1) ** 0.25)


def test_sup_noise_tail_bound():
    """3 max(sqrt(g_inf)|Theta|/(sigma tau sqrt(log tau)), 1/tau)."""
    value = sup_noise_tail_bound(0.1, 100.0, 0.5, 4.0, 0.5)
    assert value == pytest.approx(3 * max(math.sqrt(0.5) * 4.0 / (0.5 * 100 * math.sqrt(math.log(100))), 0.01))
    with pytest.raises(DomainError):
        sup_noise_tail_bound(0.1, 1.0, 0.5, 4.0, 0.5)


def test_discrepancy_cases():
    """Matching spikes near an anchor pay |beta| d^2; everything else pays |beta|."""
    d = lowpass_dictionary(31)
    acc = d.metric()
    null = NullSpec.signed_support([0.2, 0.6], [1.0, -1.0])
    on_support = Mixture.build([1.0, -2.0], [0.2, 0.6])
    assert discrepancy(on_support, null, acc, 0.4) == pytest.approx(0.0, abs=1e-12)
    near = Mixture.build([1.5], [0.205])
    dist = float(acc.distance(0.205, 0.2))
    assert discrepancy(near, null, acc, 0.4) == pytest.approx(1.5 * dist**2)
    wrong_sign = Mixture.build([-1.5], [0.2])
    assert discrepancy(wrong_sign, null, acc, 0.4) == pytest.approx(1.5)


def test_discrepancy_radius_precondition():
    """r must stay below half the minimal anchor distance."""
    d = lowpass_dictionary(31)
    null = NullSpec.signed_support([0.2, 0.21], [1.0, 1.0])
    with pytest.raises(PreconditionError):
        discrepancy(Mixture.empty(), null, d.metric(), 0.4)


def test_support_contained():
    """Signs must match as well as locations."""
    null = NullSpec.signed_support([0.2, 0.6], [1.0, -1.0])
    assert support_contained(Mixture.build([3.0], [0.2]), null)
    assert not support_contained(Mixture.build([-3.0], [0.2]), null)
    assert not support_contained(Mixture.build([1.0], [0.4]), null)


def test_run_test_and_max(dictionary, null):
    """Decisions compare |statistic| to the threshold; MAX rejects when T1 or T2 does."""
    nm = NoiseModel.grid_white(dictionary.measure, 0.0)
    params = TestParams(dictionary, nm, SolverConfig(kappa=0.01), {"T1": 0.5, "T2": 0.5})
    far = Mixture.build([3.0], [0.0], dictionary)
    y = synthesize(far, dictionary)
    o1 = run_test(y, null, "T1", params)
    assert o1.reject and o1.statistic > 0.5
    same = synthesize(null.mixture, dictionary)
    out = run_test(same, null, "MAX", params, _fitted(null.mixture))
    assert not out.reject
    assert [c.which for c in out.components] == ["T1", "T2"]
    out = run_test(y, null, "MAX", params, _fitted(far))
    assert out.reject


def test_run_test_needs_threshold(dictionary, null):
    """Missing thresholds and unknown tests raise."""
    nm = NoiseModel.grid_white(dictionary.measure, 0.0)
    params = TestParams(dictionary, nm, SolverConfig(), {"T4": 1.0})
    y = np.zeros(256)
    with pytest.raises(DomainError):
        run_test(y, null, "T1", params)
    with pytest.raises(DomainError):
        run_test(y, null, "T4", params)
