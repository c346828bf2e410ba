"""
Sparse mixtures beta * Phi_T(theta) and observations y = beta* Phi_T(theta*) + w_T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh

from offgrid.dictionary import Dictionary
from offgrid.errors import DomainError, InputError, SeparationViolation
from offgrid.noise import NoiseModel, sample_noise


@dataclass(frozen=True, eq=False)
class Mixture:
    """Coefficients beta and distinct locations theta; s = 0 is the zero signal."""

    beta: np.ndarray
    theta: np.ndarray

    @property
    def s(self) -> int:
        return int(self.beta.size)

    @classmethod
    def empty(cls) -> Mixture:
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def build(
        cls,
        beta,
        theta,
        dictionary: Dictionary | None = None,
        min_separation: float | None = None,
    ) -> Mixture:
        """Validated mixture: nonzero coefficients, distinct locations inside Theta_T."""
        b = np.atleast_1d(np.asarray(beta, dtype=float)).copy()
        t = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
        if b.shape != t.shape or b.ndim != 1:
            raise InputError(f"beta and theta must be vectors of equal length, got {b.shape} and {t.shape}")
        if np.any(b == 0) or not np.all(np.isfinite(b)):
            raise InputError("mixture coefficients must be finite and nonzero")
        width = 1.0
        if dictionary is not None:
            t = dictionary.check_locations(t) if t.size else t
            width = dictionary.width
        if t.size > 1:
            gaps = pairwise_gaps(t, dictionary)
            if gaps.min() <= 1e-12 * width:
                raise InputError("mixture locations must be pairwise distinct")
            if min_separation is not None and gaps.min() < min_separation:
                raise SeparationViolation(
                    f"minimal gap {gaps.min():.6g} below the required separation {min_separation:.6g}"
                )
        return cls(b, t)

    @classmethod
    def relaxed(cls, beta, theta) -> Mixture:
        """No validation; coincident or zero entries allowed."""
        return cls(np.atleast_1d(np.asarray(beta, dtype=float)), np.atleast_1d(np.asarray(theta, dtype=float)))

    def scaled(self, factor: float) -> Mixture:
        return Mixture(self.beta * factor, self.theta.copy())

    def l1(self) -> float:
        return float(np.abs(self.beta).sum())

    def to_record(self) -> str:
        """Line-delimited record: s, then one 'beta theta' pair per line, 17 significant digits."""
        lines = [str(self.s)]
        lines += [f"{b:.17g} {t:.17g}" for b, t in zip(self.beta, self.theta)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> Mixture:
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise InputError("empty mixture record")
        s = int(lines[0])
        if len(lines) - 1 != s:
            raise InputError(f"mixture record announces {s} pairs, found {len(lines) - 1}")
        pairs = [tuple(float(v) for v in ln.split()) for ln in lines[1:]]
        if any(len(p) != 2 for p in pairs):
            raise InputError("mixture record pairs must have two fields")
        if not pairs:
            return cls.empty()
        beta, theta = zip(*pairs)
        return cls(np.asarray(beta), np.asarray(theta))


def pairwise_gaps(theta: np.ndarray, dictionary: Dictionary | None = None) -> np.ndarray:
    """All pairwise |theta_k - theta_l| (wrapped on the torus), k < l."""
    th = np.asarray(theta, dtype=float)
    iu = np.triu_indices(th.size, 1)
    diff = th[:, None] - th[None, :]
    if dictionary is not None:
        diff = dictionary.offset(th[:, None], th[None, :])
    return np.abs(diff[iu])


def synthesize(m: Mixture, dictionary: Dictionary) -> np.ndarray:
    """sum_k beta_k phi_T(theta_k); the zero function when s = 0."""
    if m.s > 1 and pairwise_gaps(m.theta, dictionary).min() <= 1e-12 * dictionary.width:
        raise InputError("mixture locations must be pairwise distinct")
    return dictionary.synthesize(m.beta, m.theta)


def observe(m: Mixture, dictionary: Dictionary, nm: NoiseModel, seed: int, replicate: int = 0) -> np.ndarray:
    """y = synthesize(m) + w_T for the (seed, replicate) noise draw."""
    return synthesize(m, dictionary) + sample_noise(nm, dictionary.measure, seed, replicate)


def gram_matrix(m: Mixture, dictionary: Dictionary) -> np.ndarray:
    phi = dictionary.features(m.theta)
    return dictionary.inner(phi, phi)


def gram_min_eigenvalue(m: Mixture, dictionary: Dictionary) -> float:
    """Smallest eigenvalue of Gamma_kl = K_T(theta_k, theta_l)."""
    if m.s < 1:
        raise DomainError("Gram matrix needs at least one location")
    return float(eigvalsh(gram_matrix(m, dictionary))[0])


def gram_extreme_ratios(m: Mixture, dictionary: Dictionary) -> tuple[float, float]:
    """(C_min, C_max): extreme values of ||beta Phi_T(theta)|| / ||beta||_2 over beta."""
    ev = eigvalsh(gram_matrix(m, dictionary))
    return float(np.sqrt(max(ev[0], 0.0))), float(np.sqrt(ev[-1]))
