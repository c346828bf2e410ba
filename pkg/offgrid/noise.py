"""
Gaussian noise processes on an observation measure: white noise on a regular grid
and colored noise on a basis, with the decay rate Delta_T, the level sigma_bar and
the squared-norm variance Xi_T.

Sampling is keyed by (seed, replicate) so replicates are order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from offgrid.dictionary import ObservationMeasure
from offgrid.errors import DomainError, StructuralError


def replicate_rng(seed: int, replicate: int = 0, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one (seed, replicate, stream) triple."""
    ss = np.random.SeedSequence([int(seed), int(replicate), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class NoiseModel:
    kind: Literal["grid-white", "basis-colored"]
    sigma_bar: float
    size: int
    weight: float = 0.0
    xi: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.sigma_bar < 0:
            raise DomainError(f"noise level must be nonnegative, got {self.sigma_bar}")
        if self.kind == "grid-white":
            if not self.weight > 0:
                raise DomainError("grid noise needs a positive grid weight")
        elif self.kind == "basis-colored":
            if self.xi is None or len(self.xi) != self.size or np.any(np.asarray(self.xi) < 0):
                raise DomainError("basis noise needs one nonnegative weight per coefficient")
        else:
            raise DomainError(f"unknown noise kind {self.kind!r}")

    @classmethod
    def grid_white(cls, mu: ObservationMeasure, sigma_bar: float) -> NoiseModel:
        if mu.kind != "grid":
            raise StructuralError("grid-white noise needs a grid measure")
        return cls(kind="grid-white", sigma_bar=sigma_bar, size=mu.size, weight=mu.weight)

    @classmethod
    def basis_colored(cls, mu: ObservationMeasure, sigma_bar: float, xi: np.ndarray) -> NoiseModel:
        if mu.kind != "basis":
            raise StructuralError("basis-colored noise needs a basis measure")
        xi = np.asarray(xi, dtype=float)
        return cls(kind="basis-colored", sigma_bar=sigma_bar, size=mu.size, xi=xi)

    @classmethod
    def truncated_white(cls, mu: ObservationMeasure, sigma_bar: float) -> NoiseModel:
        """xi_k = 1/T on the first T basis coefficients."""
        return cls.basis_colored(mu, sigma_bar, np.full(mu.size, 1.0 / mu.size))

    @property
    def delta(self) -> float:
        if self.kind == "grid-white":
            return self.weight
        return float(np.max(self.xi))

    @property
    def xi_var(self) -> float:
        """Xi_T = Var(||w_T||^2)."""
        s4 = self.sigma_bar**4
        if self.kind == "grid-white":
            return 2.0 * s4 * self.weight**2 * self.size
        return 2.0 * s4 * float(np.sum(np.asarray(self.xi) ** 2))

    @property
    def expected_sq_norm(self) -> float:
        s2 = self.sigma_bar**2
        if self.kind == "grid-white":
            return s2 * self.weight * self.size
        return s2 * float(np.sum(self.xi))

    def compatible(self, mu: ObservationMeasure) -> None:
        want = "grid" if self.kind == "grid-white" else "basis"
        if mu.kind != want or mu.size != self.size:
            raise StructuralError(f"{self.kind} noise of size {self.size} does not fit a {mu.kind} measure of size {mu.size}")
        if self.kind == "grid-white" and not np.isclose(mu.weight, self.weight, rtol=1e-12):
            raise StructuralError("grid noise weight differs from the measure weight")


def noise_summary(nm: NoiseModel) -> tuple[float, float, float]:
    """(Delta_T, Xi_T, E||w_T||^2)."""
    return nm.delta, nm.xi_var, nm.expected_sq_norm


def sample_noise(nm: NoiseModel, mu: ObservationMeasure, seed: int, replicate: int = 0) -> np.ndarray:
    """One noise draw on mu, deterministic in (seed, replicate)."""
    nm.compatible(mu)
    if nm.sigma_bar == 0:
        return np.zeros(mu.size)
    g = replicate_rng(seed, replicate).standard_normal(mu.size)
    if nm.kind == "grid-white":
        return nm.sigma_bar * g
    return nm.sigma_bar * np.sqrt(np.asarray(nm.xi)) * g
