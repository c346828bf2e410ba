"""Build dictionaries, noise models, limit kernels and solver settings from scenario sections."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from offgrid.dictionary import (
    Dictionary,
    DirichletFamily,
    GaussianFamily,
    ObservationMeasure,
)
from offgrid.errors import DomainError
from offgrid.hypotest import NullSpec, TestConstants
from offgrid.noise import NoiseModel
from offgrid.proxkernel import ProxFunction, prox_for
from offgrid.schemas import ConstantsSection, DictionaryConfig, MixtureConfig, NoiseConfig, NullConfig, SolverSection
from offgrid.signal import Mixture
from offgrid.solver import SolverConfig, default_kappa

logger = logging.getLogger("offgrid.presets")


@dataclass(frozen=True)
class GaussianSchedule:
    T: int
    b: float
    sigma: float
    xi: float

    @property
    def window(self) -> tuple[float, float]:
        return (-(1.0 - self.xi) * self.b, (1.0 - self.xi) * self.b)

    @property
    def delta(self) -> float:
        return 2.0 * self.b / self.T


def gaussian_schedule(T: int, xi: float = 0.5) -> GaussianSchedule:
    """b_T = log T and sigma_T = 1/sqrt(xi log T)."""
    if T < 3:
        raise DomainError(f"the log T schedule needs T >= 3, got {T}")
    if not 0 < xi < 1:
        raise DomainError(f"xi must be in (0, 1), got {xi}")
    L = math.log(T)
    return GaussianSchedule(T=T, b=L, sigma=1.0 / math.sqrt(xi * L), xi=xi)


def gaussian_dictionary(T: int, b: float, sigma: float, xi: float = 0.5) -> Dictionary:
    """Gaussian features on the regular grid of [-b, b], locations in (1 - xi)[-b, b]."""
    window = (-(1.0 - xi) * b, (1.0 - xi) * b)
    return Dictionary(GaussianFamily(sigma, window), ObservationMeasure.regular_grid(-b, b, T))


def lowpass_dictionary(n_freq: int) -> Dictionary:
    """Dirichlet features on the real Fourier basis of size n_freq."""
    return Dictionary(DirichletFamily(n_freq), ObservationMeasure.fourier_basis(n_freq))


def torus_dictionary(T: int, n_freq: int | None = None) -> Dictionary:
    """Dirichlet features sampled on the regular torus grid of T points."""
    n = n_freq if n_freq is not None else (T if T % 2 else T - 1)
    if n > T:
        raise DomainError(f"{n} frequencies need at least {n} grid points, got T={T}")
    return Dictionary(DirichletFamily(n), ObservationMeasure.torus_grid(T))


def build_dictionary(cfg: DictionaryConfig) -> Dictionary:
    if cfg.preset == "gaussian":
        sched = gaussian_schedule(cfg.T, cfg.xi) if cfg.sigma is None or cfg.b is None else None
        b = cfg.b if cfg.b is not None else sched.b
        sigma = cfg.sigma if cfg.sigma is not None else sched.sigma
        d = gaussian_dictionary(cfg.T, b, sigma, cfg.xi)
    elif cfg.measure == "basis":
        n = cfg.n_freq if cfg.n_freq is not None else cfg.T
        if n != cfg.T:
            raise DomainError(f"basis size T={cfg.T} must equal the number of frequencies {n}")
        d = lowpass_dictionary(n)
    else:
        d = torus_dictionary(cfg.T, cfg.n_freq)
    logger.info("dictionary: %s, T=%s, sigma=%.6g, window=%s", cfg.preset, cfg.T, d.sigma, d.theta_window)
    return d


def build_noise(cfg: NoiseConfig, dictionary: Dictionary) -> NoiseModel:
    mu = dictionary.measure
    if mu.kind == "grid":
        if cfg.xi is not None:
            raise DomainError("noise.xi only applies to basis measures")
        return NoiseModel.grid_white(mu, cfg.sigma_bar)
    if cfg.xi is None:
        return NoiseModel.truncated_white(mu, cfg.sigma_bar)
    return NoiseModel.basis_colored(mu, cfg.sigma_bar, np.asarray(cfg.xi))


def build_prox(cfg: DictionaryConfig) -> ProxFunction:
    return prox_for(cfg.preset)


def build_solver_config(cfg: SolverSection, nm: NoiseModel, dictionary: Dictionary) -> SolverConfig:
    """SolverConfig with kappa from the default rule (tau = T) when unset."""
    kappa = cfg.kappa
    if kappa is None:
        tau = cfg.tau if cfg.tau is not None else float(dictionary.measure.size)
        kappa = default_kappa(nm, tau, cfg.c1)
    return SolverConfig(
        K=cfg.K,
        kappa=kappa,
        insertion_grid_factor=cfg.insertion_grid_factor,
        max_outer_iters=cfg.max_outer_iters,
        step_tol=cfg.step_tol,
        objective_tol=cfg.objective_tol,
        max_local_iters=cfg.max_local_iters,
        merge_radius=cfg.merge_radius,
        prune_threshold=cfg.prune_threshold,
    )


def build_mixture(cfg: MixtureConfig, dictionary: Dictionary) -> Mixture:
    if not cfg.beta:
        return Mixture.empty()
    return Mixture.build(cfg.beta, cfg.theta, dictionary)


def build_null(cfg: NullConfig, dictionary: Dictionary) -> NullSpec:
    if cfg.signs is not None:
        if not cfg.beta:
            return NullSpec.signed_support(dictionary.check_locations(cfg.theta), cfg.signs)
        return NullSpec(build_mixture(cfg, dictionary), np.asarray(cfg.signs, dtype=float))
    return NullSpec(build_mixture(cfg, dictionary))


def build_constants(cfg: ConstantsSection, calibrated: dict | None = None) -> TestConstants:
    """Explicit values win over calibrated ones, which win over defaults."""
    calibrated = calibrated or {}
    pick = lambda name, default: (  # noqa: E731
        getattr(cfg, name) if getattr(cfg, name) is not None else calibrated.get(name, default)
    )
    return TestConstants(
        C0=pick("C0", 1.0),
        C1=cfg.C1,
        C3=pick("C3", 1.0),
        C4=cfg.C4,
        C5=cfg.C5,
        C_N=pick("C_N", 1.0),
        C_F=pick("C_F", 1.0),
        c=cfg.c,
        C=cfg.C,
    )
