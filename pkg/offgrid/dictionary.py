"""
Continuous feature dictionaries: translated and scaled templates, their empirical
normalization on an observation measure, covariant kernel derivatives and the
Riemannian metric induced by the kernel.

Used by signal, solver, certificate, diagnostics and the BuildModel node.
"""

from __future__ import annotations

import logging
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.polynomial import hermite_e
from scipy.integrate import cumulative_trapezoid, quad

from offgrid.errors import (
    DegenerateFeatureError,
    DomainError,
    PositivityError,
    StructuralError,
)

logger = logging.getLogger("offgrid.dictionary")

DomainKind = Literal["real-line", "torus"]

# Rows per block when sampling many locations at once.
CHUNK = 512


def wrap_offset(x: np.ndarray | float) -> np.ndarray:
    """Representative of x modulo 1 in [-1/2, 1/2)."""
    return np.mod(np.asarray(x, dtype=float) + 0.5, 1.0) - 0.5


def scan_points(window: tuple[float, float], step: float, torus: bool = False) -> np.ndarray:
    """Points lo + k*step covering the window; halving step yields a superset."""
    if not step > 0:
        raise DomainError(f"scan step must be positive, got {step}")
    lo, hi = window
    width = hi - lo
    if torus:
        n = int(math.ceil(width / step - 1e-9))
        return lo + step * np.arange(n)
    n = int(math.floor(width / step + 1e-9))
    grid = lo + step * np.arange(n + 1)
    if hi - grid[-1] > 1e-12 * width:
        grid = np.append(grid, hi)
    return grid


# ---------------------------------------------------------------------------
# Observation measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObservationMeasure:
    """
    The measure lambda_T on which observations live.

    grid: samples at `points` with uniform weight `weight` (Delta_T).
    basis: coefficients on an orthonormal basis of `size` elements, weight 1.
    """

    kind: Literal["grid", "basis"]
    size: int
    weight: float = 1.0
    points: np.ndarray | None = None
    domain_kind: DomainKind = "real-line"
    T: int = 0

    def __post_init__(self) -> None:
        if self.size < 1:
            raise StructuralError(f"measure size must be positive, got {self.size}")
        if self.kind == "grid":
            if self.points is None or len(self.points) != self.size:
                raise StructuralError("grid measure needs one point per sample")
            if np.any(np.diff(self.points) <= 0):
                raise StructuralError("grid points must be strictly increasing")
            if not self.weight > 0:
                raise StructuralError("grid weight must be positive")

    @classmethod
    def regular_grid(cls, a: float, b: float, T: int) -> ObservationMeasure:
        """Regular grid t_j = a + j*Delta_T, j = 0..T-1, with Delta_T = (b - a)/T."""
        if T < 1 or not b > a:
            raise DomainError(f"invalid grid [{a}, {b}] with T={T}")
        delta = (b - a) / T
        points = a + delta * np.arange(T)
        return cls(kind="grid", size=T, weight=delta, points=points, domain_kind="real-line", T=T)

    @classmethod
    def torus_grid(cls, T: int) -> ObservationMeasure:
        """Regular grid j/T on the unit torus, Delta_T = 1/T."""
        if T < 1:
            raise DomainError(f"T must be positive, got {T}")
        return cls(
            kind="grid", size=T, weight=1.0 / T, points=np.arange(T) / T, domain_kind="torus", T=T
        )

    @classmethod
    def fourier_basis(cls, n: int) -> ObservationMeasure:
        """Real trigonometric basis 1, sqrt2 cos(2 pi k t), sqrt2 sin(2 pi k t) of odd size n."""
        if n < 1 or n % 2 == 0:
            raise DomainError(f"Fourier basis size must be odd, got {n}")
        return cls(kind="basis", size=n, weight=1.0, points=None, domain_kind="torus", T=n)

    def check(self, f: np.ndarray) -> np.ndarray:
        arr = np.asarray(f, dtype=float)
        if arr.shape[-1] != self.size:
            raise StructuralError(
                f"sampled function has {arr.shape[-1]} entries, measure has {self.size}"
            )
        return arr


def inner_product(f: np.ndarray, g: np.ndarray, mu: ObservationMeasure) -> float:
    """L2(lambda_T) inner product of two functions sampled on the same measure."""
    f = mu.check(f)
    g = mu.check(g)
    if f.shape != g.shape:
        raise StructuralError(f"shape mismatch {f.shape} vs {g.shape}")
    return float(mu.weight * np.dot(f, g))


# ---------------------------------------------------------------------------
# Feature families
# ---------------------------------------------------------------------------


class FeatureFamily(ABC):
    """A template h(., sigma) with analytic derivatives up to order 3 in its first argument."""

    name: str = "family"
    domain_kind: DomainKind = "real-line"

    def __init__(self, sigma: float, theta_window: tuple[float, float]):
        if not sigma > 0:
            raise DomainError(f"scale must be positive, got {sigma}")
        lo, hi = float(theta_window[0]), float(theta_window[1])
        if not hi > lo:
            raise DomainError(f"empty location window [{lo}, {hi}]")
        self.sigma = float(sigma)
        self.theta_window = (lo, hi)

    @abstractmethod
    def h(self, t: np.ndarray, order: int = 0) -> np.ndarray:
        """order-th derivative of t -> h(t, sigma)."""

    def sample(self, thetas: np.ndarray, mu: ObservationMeasure, order: int) -> np.ndarray:
        """order-th theta-derivative of h(theta - ., sigma) on mu; shape (len(thetas), mu.size)."""
        if mu.kind != "grid":
            raise StructuralError(f"{self.name} features are only available on grid measures")
        if mu.domain_kind != self.domain_kind:
            raise StructuralError(
                f"{self.name} lives on the {self.domain_kind}, measure on the {mu.domain_kind}"
            )
        offsets = thetas[:, None] - mu.points[None, :]
        if self.domain_kind == "torus":
            offsets = wrap_offset(offsets)
        return self.h(offsets, order)

    def lebesgue_norm(self) -> float:
        """Continuum L2(Leb) norm of h(., sigma), by adaptive quadrature."""
        if self.domain_kind == "torus":
            val, _ = quad(lambda t: float(self.h(np.array(t)) ** 2), -0.5, 0.5, limit=400)
        else:
            val, _ = quad(lambda t: float(self.h(np.array(t)) ** 2), -np.inf, np.inf, limit=400)
        return math.sqrt(val)


class GaussianFamily(FeatureFamily):
    """h(t, sigma) = exp(-t^2 / 2 sigma^2) / (pi^(1/4) sigma^(1/2)) on the real line."""

    name = "gaussian"
    domain_kind = "real-line"

    def h(self, t: np.ndarray, order: int = 0) -> np.ndarray:
        if order < 0 or order > 3:
            raise DomainError(f"derivative order must be in 0..3, got {order}")
        u = np.asarray(t, dtype=float) / self.sigma
        coef = np.zeros(order + 1)
        coef[order] = 1.0
        scale = (-1.0) ** order * self.sigma ** (-order) / (math.pi**0.25 * math.sqrt(self.sigma))
        return scale * hermite_e.hermeval(u, coef) * np.exp(-0.5 * u * u)


class DirichletFamily(FeatureFamily):
    """
    Normalized Dirichlet kernel sin(n pi t)/(sqrt(n) sin(pi t)) on the unit torus.

    n is the (odd) number of frequencies, sigma = 1/n. Features have exact
    coefficients on the real Fourier basis of size n and are exactly integrated
    by any regular torus grid with at least n points.
    """

    name = "dirichlet"
    domain_kind = "torus"

    def __init__(self, n_freq: int):
        if n_freq < 1 or n_freq % 2 == 0:
            raise DomainError(f"number of frequencies must be odd, got {n_freq}")
        super().__init__(1.0 / n_freq, (0.0, 1.0))
        self.n_freq = int(n_freq)
        self.cutoff = (n_freq - 1) // 2
        self._omega = 2.0 * math.pi * np.arange(1, self.cutoff + 1)

    def h(self, t: np.ndarray, order: int = 0) -> np.ndarray:
        if order < 0 or order > 3:
            raise DomainError(f"derivative order must be in 0..3, got {order}")
        t = np.asarray(t, dtype=float)
        phase = np.multiply.outer(t, self._omega) + order * math.pi / 2
        terms = 2.0 * self._omega**order * np.cos(phase)
        out = terms.sum(axis=-1)
        if order == 0:
            out = out + 1.0
        return out / math.sqrt(self.n_freq)

    def coefficients(self, thetas: np.ndarray, order: int) -> np.ndarray:
        """Basis coefficients of the order-th theta-derivative of h(theta - .)."""
        n = len(thetas)
        out = np.zeros((n, self.n_freq))
        scale = math.sqrt(2.0 / self.n_freq)
        if order == 0:
            out[:, 0] = 1.0 / math.sqrt(self.n_freq)
        phase = np.multiply.outer(thetas, self._omega) + order * math.pi / 2
        amp = scale * self._omega**order
        out[:, 1::2] = amp * np.cos(phase)
        out[:, 2::2] = amp * np.sin(phase)
        return out

    def sample(self, thetas: np.ndarray, mu: ObservationMeasure, order: int) -> np.ndarray:
        if mu.domain_kind != "torus":
            raise StructuralError("dirichlet features live on the torus")
        coefs = self.coefficients(thetas, order)
        if mu.kind == "basis":
            if mu.size != self.n_freq:
                raise StructuralError(
                    f"basis of size {mu.size} does not match {self.n_freq} frequencies"
                )
            return coefs
        return coefs @ _fourier_basis_values(self.n_freq, mu.points)


def _fourier_basis_values(n: int, points: np.ndarray) -> np.ndarray:
    """Rows: the n real Fourier basis functions evaluated at points."""
    k = np.arange(1, (n - 1) // 2 + 1)
    ang = 2.0 * math.pi * np.multiply.outer(k, points)
    out = np.empty((n, len(points)))
    out[0] = 1.0
    out[1::2] = math.sqrt(2.0) * np.cos(ang)
    out[2::2] = math.sqrt(2.0) * np.sin(ang)
    return out


# ---------------------------------------------------------------------------
# Normalized features and covariant derivatives
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormalizedFeature:
    """phi_T(theta) and its first three theta-derivatives, sampled on the measure."""

    theta: float
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray


def _normalize(raw: list[np.ndarray], weight: float) -> list[np.ndarray]:
    """Quotient rule for f/||f|| up to the order available in raw (rows are locations)."""
    order = len(raw) - 1
    f = raw[0]
    ip = lambda a, b: weight * np.einsum("ij,ij->i", a, b)  # noqa: E731
    N = ip(f, f)
    if np.any(~np.isfinite(N)) or np.any(N <= np.finfo(float).tiny):
        raise DegenerateFeatureError("feature has zero empirical norm on the observation measure")
    q = N**-0.5
    out = [q[:, None] * f]
    if order >= 1:
        f1 = raw[1]
        N1 = 2.0 * ip(f, f1)
        q1 = -0.5 * N**-1.5 * N1
        out.append(q1[:, None] * f + q[:, None] * f1)
    if order >= 2:
        f2 = raw[2]
        N2 = 2.0 * ip(f1, f1) + 2.0 * ip(f, f2)
        q2 = 0.75 * N**-2.5 * N1**2 - 0.5 * N**-1.5 * N2
        out.append(q2[:, None] * f + 2.0 * q1[:, None] * f1 + q[:, None] * f2)
    if order >= 3:
        f3 = raw[3]
        N3 = 6.0 * ip(f1, f2) + 2.0 * ip(f, f3)
        q3 = -1.875 * N**-3.5 * N1**3 + 2.25 * N**-2.5 * N1 * N2 - 0.5 * N**-1.5 * N3
        out.append(
            q3[:, None] * f + 3.0 * q2[:, None] * f1 + 3.0 * q1[:, None] * f2 + q[:, None] * f3
        )
    return out


class Dictionary:
    """A feature family bound to the observation measure it is sampled on."""

    def __init__(self, family: FeatureFamily, measure: ObservationMeasure):
        if family.domain_kind != measure.domain_kind:
            raise StructuralError(
                f"{family.name} lives on the {family.domain_kind}, measure on the {measure.domain_kind}"
            )
        if measure.kind == "basis" and not isinstance(family, DirichletFamily):
            raise StructuralError(f"{family.name} features have no basis representation")
        self.family = family
        self.measure = measure
        self._cache: dict = {}
        self._lock = threading.Lock()

    # -- geometry ---------------------------------------------------------

    @property
    def sigma(self) -> float:
        return self.family.sigma

    @property
    def theta_window(self) -> tuple[float, float]:
        return self.family.theta_window

    @property
    def width(self) -> float:
        lo, hi = self.theta_window
        return hi - lo

    @property
    def is_torus(self) -> bool:
        return self.family.domain_kind == "torus"

    def check_locations(self, thetas) -> np.ndarray:
        """Validate locations against Theta_T (wrapping on the torus)."""
        th = np.atleast_1d(np.asarray(thetas, dtype=float))
        if not np.all(np.isfinite(th)):
            raise DomainError("locations must be finite")
        if self.is_torus:
            return np.mod(th, 1.0)
        lo, hi = self.theta_window
        tol = 1e-12 * self.width
        if np.any(th < lo - tol) or np.any(th > hi + tol):
            raise DomainError(f"location outside the window [{lo}, {hi}]: {th}")
        return np.clip(th, lo, hi)

    def offset(self, theta, theta_prime) -> np.ndarray:
        """Signed difference theta - theta', wrapped to [-1/2, 1/2) on the torus."""
        d = np.asarray(theta, dtype=float) - np.asarray(theta_prime, dtype=float)
        return wrap_offset(d) if self.is_torus else d

    def scan_grid(self, step: float) -> np.ndarray:
        return scan_points(self.theta_window, step, self.is_torus)

    # -- sampling ---------------------------------------------------------

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Row-wise or matrix inner products: weight * f @ g.T-compatible contraction."""
        return self.measure.weight * (np.asarray(f) @ np.asarray(g).T)

    def norm(self, f: np.ndarray) -> float:
        f = self.measure.check(f)
        return float(math.sqrt(max(self.measure.weight * float(np.dot(f, f)), 0.0)))

    def raw(self, thetas: np.ndarray, order: int) -> np.ndarray:
        return self.family.sample(np.asarray(thetas, dtype=float), self.measure, order)

    def normalized(self, thetas, order: int = 0) -> list[np.ndarray]:
        """[phi, d phi, ..., d^order phi] as arrays of shape (len(thetas), measure.size)."""
        th = self.check_locations(thetas)
        parts: list[list[np.ndarray]] = [[] for _ in range(order + 1)]
        for start in range(0, len(th), CHUNK):
            block = th[start : start + CHUNK]
            raw = [self.raw(block, k) for k in range(order + 1)]
            for k, arr in enumerate(_normalize(raw, self.measure.weight)):
                parts[k].append(arr)
        return [np.vstack(p) if p else np.zeros((0, self.measure.size)) for p in parts]

    def features(self, thetas) -> np.ndarray:
        return self.normalized(thetas, 0)[0]

    def feature(self, theta: float) -> NormalizedFeature:
        phi, d1, d2, d3 = self.normalized([theta], 3)
        return NormalizedFeature(float(self.check_locations(theta)[0]), phi[0], d1[0], d2[0], d3[0])

    def g_values(self, thetas) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """g_T, g_T', g_T'' at the given locations from analytic feature derivatives."""
        phi, d1, d2, d3 = self.normalized(thetas, 3)
        w = self.measure.weight
        g = w * np.einsum("ij,ij->i", d1, d1)
        g1 = 2.0 * w * np.einsum("ij,ij->i", d2, d1)
        g2 = 2.0 * w * np.einsum("ij,ij->i", d3, d1) + 2.0 * w * np.einsum("ij,ij->i", d2, d2)
        return g, g1, g2

    def covariant(self, thetas, order: int = 3) -> list[np.ndarray]:
        """Covariant derivatives D_0..D_order of phi_T at the given locations."""
        phi, d1, d2, d3 = self.normalized(thetas, 3)
        w = self.measure.weight
        g = w * np.einsum("ij,ij->i", d1, d1)
        if np.any(g <= 0):
            raise PositivityError("g_T is not positive at some location")
        g1 = 2.0 * w * np.einsum("ij,ij->i", d2, d1)
        g2 = 2.0 * w * np.einsum("ij,ij->i", d3, d1) + 2.0 * w * np.einsum("ij,ij->i", d2, d2)
        c = lambda v: v[:, None]  # noqa: E731
        out = [phi, c(g**-0.5) * d1]
        if order >= 2:
            out.append(c(g**-1.0) * d2 - 0.5 * c(g**-2.0 * g1) * d1)
        if order >= 3:
            out.append(
                c(g**-1.5) * d3
                - 1.5 * c(g**-2.5 * g1) * d2
                + c(g**-3.5 * g1**2 - 0.5 * g**-2.5 * g2) * d1
            )
        return out[: order + 1]

    def kernel(self, thetas, thetas_prime, i: int = 0, j: int = 0) -> np.ndarray:
        """Matrix of K_T^[i,j](theta_a, theta'_b)."""
        if not (0 <= i <= 3 and 0 <= j <= 3):
            raise DomainError(f"kernel derivative orders must be in 0..3, got ({i}, {j})")
        A = self.covariant(thetas, max(i, 1))[i] if i else self.features(thetas)
        B = self.covariant(thetas_prime, max(j, 1))[j] if j else self.features(thetas_prime)
        return self.inner(A, B)

    def synthesize(self, beta: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.size == 0:
            return np.zeros(self.measure.size)
        return beta @ self.features(thetas)

    # -- cached tables ----------------------------------------------------

    def _cached(self, key, build):
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = build()
        with self._lock:
            return self._cache.setdefault(key, value)

    def insertion_table(self, points_per_sigma: int) -> tuple[np.ndarray, np.ndarray]:
        """Scan locations and their normalized features, built once per resolution."""

        def build():
            grid = self.scan_grid(self.sigma / points_per_sigma)
            return grid, self.features(grid)

        return self._cached(("insertion", points_per_sigma), build)

    def metric(self, steps_per_sigma: int = 50) -> MetricAccumulator:
        return self._cached(("metric", steps_per_sigma), lambda: MetricAccumulator.build(self, steps_per_sigma))


# ---------------------------------------------------------------------------
# Metric
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricAccumulator:
    """Tabulated primitive G_T of sqrt(g_T) over Theta_T, linearly interpolated."""

    nodes: np.ndarray
    G: np.ndarray
    torus: bool
    window: tuple[float, float]
    g_nodes: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, dictionary: Dictionary, steps_per_sigma: int = 50) -> MetricAccumulator:
        lo, hi = dictionary.theta_window
        n = max(2, int(math.ceil(dictionary.width * steps_per_sigma / dictionary.sigma)))
        nodes = np.linspace(lo, hi, n + 1)
        g, _, _ = dictionary.g_values(nodes[:-1] if dictionary.is_torus else nodes)
        if dictionary.is_torus:
            g = np.append(g, g[0])
        if np.any(g <= 0):
            raise PositivityError("g_T is not positive on the location window")
        G = cumulative_trapezoid(np.sqrt(g), nodes, initial=0.0)
        if np.any(np.diff(G) <= 0):
            raise PositivityError("metric primitive is not strictly increasing")
        logger.debug("metric table: %s nodes, total length %.6g", len(nodes), G[-1])
        return cls(nodes=nodes, G=G, torus=dictionary.is_torus, window=(lo, hi), g_nodes=g)

    @property
    def total(self) -> float:
        return float(self.G[-1])

    def primitive(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        if self.torus:
            turns = np.floor(th)
            return np.interp(th - turns, self.nodes, self.G) + turns * self.total
        lo, hi = self.window
        tol = 1e-12 * (hi - lo)
        if np.any(th < lo - tol) or np.any(th > hi + tol):
            raise DomainError(f"location outside the window [{lo}, {hi}]")
        return np.interp(th, self.nodes, self.G)

    def distance(self, theta, theta_prime) -> np.ndarray | float:
        th = np.asarray(theta, dtype=float)
        tp = np.asarray(theta_prime, dtype=float)
        if self.torus:
            tp = th + wrap_offset(tp - th)
        d = np.abs(self.primitive(th) - self.primitive(tp))
        return float(d) if d.ndim == 0 else d


def metric_distance(acc: MetricAccumulator, theta, theta_prime) -> np.ndarray | float:
    """d_T(theta, theta') = |G_T(theta) - G_T(theta')|."""
    return acc.distance(theta, theta_prime)


# ---------------------------------------------------------------------------
# Function-style entry points
# ---------------------------------------------------------------------------


def normalized_feature(fam: FeatureFamily, mu: ObservationMeasure, theta: float) -> NormalizedFeature:
    return Dictionary(fam, mu).feature(theta)


def empirical_kernel(
    fam: FeatureFamily, mu: ObservationMeasure, theta: float, theta_prime: float, i: int = 0, j: int = 0
) -> float:
    """K_T^[i,j](theta, theta') for the family sampled on mu."""
    return float(Dictionary(fam, mu).kernel([theta], [theta_prime], i, j)[0, 0])
