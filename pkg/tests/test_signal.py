"""Unit tests for offgrid.signal."""

import math

import numpy as np
import pytest

from offgrid.errors import InputError, SeparationViolation
from offgrid.noise import NoiseModel
from offgrid.presets import gaussian_dictionary, torus_dictionary
from offgrid.proxkernel import prox_for, separation_requirement
from offgrid.signal import (
    Mixture,
    gram_extreme_ratios,
    gram_min_eigenvalue,
    observe,
    pairwise_gaps,
    synthesize,
)


@pytest.fixture
def dictionary():
    return gaussian_dictionary(256, math.log(256), 0.5)


def test_build_validates(dictionary):
    """Zero coefficients, length mismatches and duplicate locations are rejected."""
    with pytest.raises(InputError):
        Mixture.build([1.0, 0.0], [0.0, 1.0], dictionary)
    with pytest.raises(InputError):
        Mixture.build([1.0], [0.0, 1.0], dictionary)
    with pytest.raises(InputError):
        Mixture.build([1.0, 2.0], [0.5, 0.5], dictionary)


def test_build_enforces_separation(dictionary):
    """A required separation larger than the gap raises."""
    with pytest.raises(SeparationViolation):
        Mixture.build([1.0, 1.0], [0.0, 0.3], dictionary, min_separation=0.5)
    m = Mixture.build([1.0, 1.0], [0.0, 0.6], dictionary, min_separation=0.5)
    assert m.s == 2


def test_empty_mixture_synthesizes_zero(dictionary):
    """s = 0 is the zero function."""
    assert np.array_equal(synthesize(Mixture.empty(), dictionary), np.zeros(256))


def test_synthesize_is_linear(dictionary):
    """beta Phi(theta) is the weighted sum of normalized features."""
    m = Mixture.build([2.0, -0.5], [-0.4, 0.7], dictionary)
    phi = dictionary.features(m.theta)
    assert np.allclose(synthesize(m, dictionary), 2.0 * phi[0] - 0.5 * phi[1])
    assert np.allclose(synthesize(m.scaled(3.0), dictionary), 3.0 * synthesize(m, dictionary))


def test_observe_noiseless_equals_synthesis(dictionary):
    """With sigma_bar = 0 the observation is the clean mixture."""
    m = Mixture.build([1.0], [0.2], dictionary)
    nm = NoiseModel.grid_white(dictionary.measure, 0.0)
    assert np.array_equal(observe(m, dictionary, nm, seed=1), synthesize(m, dictionary))


def test_record_round_trip():
    """The line-delimited record keeps 17 significant digits."""
    m = Mixture.build([1 / 3, -2.5], [0.1, math.pi / 10])
    text = m.to_record()
    assert text.splitlines()[0] == "2"
    back = Mixture.from_record(text)
    assert np.array_equal(back.beta, m.beta) and np.array_equal(back.theta, m.theta)
    assert Mixture.from_record("0\n").s == 0


def test_from_record_rejects_bad_counts():
    """A count line that disagrees with the pairs raises."""
    with pytest.raises(InputError):
        Mixture.from_record("2\n1.0 0.5\n")
    with pytest.raises(InputError):
        Mixture.from_record("")


def test_pairwise_gaps_wrap_on_torus():
    """Torus gaps use the wrapped offset."""
    d = torus_dictionary(31)
    assert np.allclose(pairwise_gaps(np.array([0.05, 0.95]), d), [0.1])


def test_gram_eigenvalues(dictionary):
    """Well separated spikes have a Gram matrix close to the identity."""
    m = Mixture.build([1.0, 1.0], [-1.5, 1.5], dictionary)
    lo = gram_min_eigenvalue(m, dictionary)
    c_min, c_max = gram_extreme_ratios(m, dictionary)
    assert 0.9 < lo <= 1.0
    assert c_min == pytest.approx(math.sqrt(lo))
    assert 1.0 <= c_max < 1.1


def test_gram_bounds_at_required_separation():
    """Five spikes spaced exactly sigma * Sigma(0.5, 0.4, 5) apart: lambda_min >= 5/6, C_min >= 5/6, C_max <= 7/6."""
    sigma = 0.5
    d = gaussian_dictionary(8192, 150.0, sigma)
    gap = sigma * separation_requirement(prox_for("gaussian"), 0.5, 0.4, 5)
    theta = [(k - 2) * gap for k in range(5)]
    m = Mixture.build([1.0] * 5, theta, d)
    assert gram_min_eigenvalue(m, d) >= 5 / 6
    c_min, c_max = gram_extreme_ratios(m, d)
    assert c_min >= 5 / 6
    assert c_max <= 7 / 6
