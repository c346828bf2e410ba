"""Unit tests for offgrid.noise."""

import numpy as np
import pytest

from offgrid.dictionary import ObservationMeasure, inner_product
from offgrid.errors import DomainError, StructuralError
from offgrid.noise import NoiseModel, noise_summary, replicate_rng, sample_noise


def test_grid_white_summary():
    """Grid noise: Delta_T is the grid weight and Xi_T = 2 sigma^4 Delta^2 T."""
    mu = ObservationMeasure.regular_grid(0.0, 1.0, 64)
    nm = NoiseModel.grid_white(mu, 2.0)
    delta, xi_var, mean = noise_summary(nm)
    assert delta == pytest.approx(1 / 64)
    assert xi_var == pytest.approx(2 * 16 * (1 / 64) ** 2 * 64)
    assert mean == pytest.approx(4.0)


def test_truncated_white_basis():
    """xi_k = 1/T gives Delta_T = 1/T and E||w||^2 = sigma^2."""
    mu = ObservationMeasure.fourier_basis(31)
    nm = NoiseModel.truncated_white(mu, 1.0)
    assert nm.delta == pytest.approx(1 / 31)
    assert nm.expected_sq_norm == pytest.approx(1.0)
    assert nm.xi_var == pytest.approx(2 / 31)


def test_sq_norm_moments_match_summary():
    """Monte Carlo mean and variance of ||w_T||^2 match the closed forms."""
    mu = ObservationMeasure.regular_grid(0.0, 1.0, 64)
    nm = NoiseModel.grid_white(mu, 1.0)
    sq = np.array([inner_product(w, w, mu) for w in (sample_noise(nm, mu, 7, k) for k in range(4000))])
    assert sq.mean() == pytest.approx(nm.expected_sq_norm, abs=0.02)
    assert sq.var() == pytest.approx(nm.xi_var, rel=0.15)


def test_sampling_is_keyed_by_seed_and_replicate():
    """The same (seed, replicate) reproduces the draw; different keys differ."""
    mu = ObservationMeasure.regular_grid(0.0, 1.0, 32)
    nm = NoiseModel.grid_white(mu, 1.0)
    a = sample_noise(nm, mu, 3, 5)
    assert np.array_equal(a, sample_noise(nm, mu, 3, 5))
    assert not np.array_equal(a, sample_noise(nm, mu, 3, 6))
    assert not np.array_equal(a, sample_noise(nm, mu, 4, 5))


def test_replicate_streams_are_independent():
    """Streams of one replicate do not share draws."""
    a = replicate_rng(1, 2, 0).standard_normal(8)
    b = replicate_rng(1, 2, 1).standard_normal(8)
    assert not np.allclose(a, b)


def test_zero_noise_level():
    """sigma_bar = 0 yields the zero vector."""
    mu = ObservationMeasure.fourier_basis(15)
    nm = NoiseModel.truncated_white(mu, 0.0)
    assert np.array_equal(sample_noise(nm, mu, 0), np.zeros(15))


def test_noise_measure_mismatch():
    """Noise built for one measure does not sample on another."""
    grid = ObservationMeasure.regular_grid(0.0, 1.0, 16)
    with pytest.raises(StructuralError):
        NoiseModel.basis_colored(grid, 1.0, np.ones(16))
    nm = NoiseModel.grid_white(grid, 1.0)
    with pytest.raises(StructuralError):
        sample_noise(nm, ObservationMeasure.regular_grid(0.0, 1.0, 17), 0)


def test_invalid_noise_parameters():
    """Negative levels and negative variances are rejected."""
    mu = ObservationMeasure.fourier_basis(5)
    with pytest.raises(DomainError):
        NoiseModel.truncated_white(mu, -1.0)
    with pytest.raises(DomainError):
        NoiseModel.basis_colored(mu, 1.0, [-1.0, 1, 1, 1, 1])
