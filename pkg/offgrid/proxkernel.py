"""
The translation-invariant limit kernel F((theta - theta')/sigma_T) and every constant
derived from F: g_inf, L_i, epsilon, nu, delta(u, s), the H_inf bounds and the
separation requirement Sigma(eta, r, s).

Used by diagnostics, certificate checks, the constants verb and the separation
checks of signal and harness.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import hermite_e
from scipy.optimize import minimize_scalar
from scipy.special import comb, factorial

from offgrid.errors import AssumptionViolation, DomainError

logger = logging.getLogger("offgrid.proxkernel")

MAX_ORDER = 6
ENVELOPE_ORDERS = (0, 1, 2, 3, 4)
DELTA_CAP = 1e6


class ProxFunction(ABC):
    """An even function F with F(0) = 1, derivatives up to order 6 and tail envelopes."""

    name: str = "prox"

    @abstractmethod
    def F(self, x, order: int = 0) -> np.ndarray:
        """order-th derivative of F at x."""

    @abstractmethod
    def envelope(self, order: int, r: float) -> float:
        """sup over |x| >= r of |F^(order)(x)|; nonincreasing in r."""

    @cached_property
    def g_inf(self) -> float:
        return float(-self.F(0.0, 2))

    def sup_norm(self, order: int) -> float:
        return self.envelope(order, 0.0)


class GaussianProx(ProxFunction):
    """F(t) = exp(-t^2/4), the autocorrelation of the unit Gaussian feature."""

    name = "gaussian"

    def F(self, x, order: int = 0) -> np.ndarray:
        if not 0 <= order <= MAX_ORDER:
            raise DomainError(f"derivative order must be in 0..{MAX_ORDER}, got {order}")
        x = np.asarray(x, dtype=float)
        coef = np.zeros(order + 1)
        coef[order] = 1.0
        return (-1.0) ** order * 2.0 ** (-order / 2) * hermite_e.hermeval(x / math.sqrt(2.0), coef) * np.exp(-x * x / 4)

    @cached_property
    def _stationary(self) -> dict[int, np.ndarray]:
        # |F^(n)| is stationary at the zeros of F^(n+1), i.e. sqrt2 * roots of He_{n+1}
        out = {}
        for n in ENVELOPE_ORDERS:
            coef = np.zeros(n + 2)
            coef[n + 1] = 1.0
            roots = np.real(hermite_e.hermeroots(coef)) * math.sqrt(2.0)
            out[n] = np.sort(roots[roots >= 0])
        return out

    def envelope(self, order: int, r: float) -> float:
        if order not in ENVELOPE_ORDERS:
            raise DomainError(f"envelope order must be in {ENVELOPE_ORDERS}, got {order}")
        r = abs(float(r))
        best = abs(float(self.F(r, order)))
        pts = self._stationary[order]
        pts = pts[pts > r]
        if pts.size:
            best = max(best, float(np.max(np.abs(self.F(pts, order)))))
        return best


def _sinc_derivative(x: np.ndarray, n: int) -> np.ndarray:
    """n-th derivative of sin(x)/x."""
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = np.atleast_1d(x).ravel()
    out = np.empty_like(x)
    small = np.abs(x) < 2.0
    if np.any(small):
        xs = x[small]
        acc = np.zeros_like(xs)
        for m in range((n + 1) // 2, 40):
            p = 2 * m - n
            c = (-1.0) ** m * math.factorial(2 * m) / (math.factorial(p) * math.factorial(2 * m + 1))
            acc += c * xs**p
        out[small] = acc
    if np.any(~small):
        xl = x[~small]
        acc = np.zeros_like(xl)
        for k in range(n + 1):
            acc += (
                comb(n, k, exact=True)
                * np.sin(xl + k * math.pi / 2)
                * (-1.0) ** (n - k)
                * math.factorial(n - k)
                * xl ** (-(n - k + 1))
            )
        out[~small] = acc
    return out.reshape(shape)


class SincProx(ProxFunction):
    """F(t) = sin(pi t)/(pi t), the limit of the normalized Dirichlet kernel."""

    name = "dirichlet"
    table_max = 64.0
    table_step = 1.0 / 256

    def F(self, x, order: int = 0) -> np.ndarray:
        if not 0 <= order <= MAX_ORDER:
            raise DomainError(f"derivative order must be in 0..{MAX_ORDER}, got {order}")
        x = np.asarray(x, dtype=float)
        return math.pi**order * _sinc_derivative(math.pi * x, order)

    def tail_bound(self, order: int, r: float) -> float:
        """Certified bound on |F^(order)(x)| for |x| >= r > 0 (termwise Leibniz bound)."""
        x = math.pi * r
        total = sum(
            comb(order, k, exact=True) * factorial(order - k) * x ** (-(order - k + 1))
            for k in range(order + 1)
        )
        return math.pi**order * float(total)

    @cached_property
    def _peaks(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        grid = np.arange(0.0, self.table_max + self.table_step / 2, self.table_step)
        out = {}
        for n in ENVELOPE_ORDERS:
            a = np.abs(self.F(grid, n))
            locs, vals = [], []
            if a[0] >= a[1]:
                locs.append(0.0)
                vals.append(a[0])
            interior = np.where((a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:]))[0] + 1
            for i in interior:
                res = minimize_scalar(
                    lambda t: -abs(float(self.F(t, n))),
                    bounds=(grid[i - 1], grid[i + 1]),
                    method="bounded",
                    options={"xatol": 1e-12},
                )
                locs.append(float(res.x))
                vals.append(max(a[i], -float(res.fun)))
            vals_arr = np.asarray(vals)
            # suffix maxima: best peak at or beyond each index
            suffix = np.maximum.accumulate(vals_arr[::-1])[::-1]
            out[n] = (np.asarray(locs), suffix)
        return out

    def envelope(self, order: int, r: float) -> float:
        if order not in ENVELOPE_ORDERS:
            raise DomainError(f"envelope order must be in {ENVELOPE_ORDERS}, got {order}")
        r = abs(float(r))
        if r >= self.table_max:
            return self.tail_bound(order, r)
        locs, suffix = self._peaks[order]
        best = max(abs(float(self.F(r, order))), self.tail_bound(order, self.table_max))
        idx = int(np.searchsorted(locs, r, side="right"))
        if idx < len(suffix):
            best = max(best, float(suffix[idx]))
        return best


PROX_PRESETS: dict[str, type[ProxFunction]] = {
    "gaussian": GaussianProx,
    "dirichlet": SincProx,
}


def prox_for(preset: str) -> ProxFunction:
    try:
        return PROX_PRESETS[preset]()
    except KeyError:
        raise DomainError(f"unknown preset {preset!r}; expected one of {sorted(PROX_PRESETS)}") from None


# ---------------------------------------------------------------------------
# Kernel and constants
# ---------------------------------------------------------------------------


def prox_kernel_derivative(
    pf: ProxFunction, sigma: float, theta, theta_prime, i: int, j: int, torus: bool = False
) -> np.ndarray:
    """K_prox^[i,j](theta, theta') = (-1)^j g_inf^(-(i+j)/2) F^(i+j)((theta - theta')/sigma)."""
    if not (0 <= i <= 3 and 0 <= j <= 3):
        raise DomainError(f"orders must be in 0..3, got ({i}, {j})")
    if not sigma > 0:
        raise DomainError(f"scale must be positive, got {sigma}")
    d = np.asarray(theta, dtype=float) - np.asarray(theta_prime, dtype=float)
    if torus:
        d = np.mod(d + 0.5, 1.0) - 0.5
    return (-1.0) ** j * pf.g_inf ** (-(i + j) / 2) * pf.F(d / sigma, i + j)


def lipschitz_constants(pf: ProxFunction) -> dict[int, float]:
    """L_i = g_inf^(-i/2) ||F^(i)||_inf for i = 0..4 and L_6 = g_inf^(-3) |F^(6)(0)|."""
    L = {i: pf.g_inf ** (-i / 2) * pf.sup_norm(i) for i in ENVELOPE_ORDERS}
    L[6] = pf.g_inf**-3 * abs(float(pf.F(0.0, 6)))
    return L


def validity_cap(pf: ProxFunction) -> float:
    """Largest admissible r: 0.99 / sqrt(2 g_inf L_2)."""
    return 0.99 / math.sqrt(2.0 * pf.g_inf * lipschitz_constants(pf)[2])


def epsilon_of(pf: ProxFunction, r: float) -> float:
    """epsilon(r) = 1 - sup{|F(r')| : r' >= r}."""
    if not r > 0:
        raise DomainError(f"r must be positive, got {r}")
    return 1.0 - pf.envelope(0, r)


def nu_of(pf: ProxFunction, r: float, n_grid: int = 2001) -> float:
    """nu(r) = -sup{F''(r')/g_inf : r' in [0, r]}."""
    if not r > 0:
        raise DomainError(f"r must be positive, got {r}")
    grid = np.linspace(0.0, r, n_grid)
    vals = pf.F(grid, 2) / pf.g_inf
    k = int(np.argmax(vals))
    best = float(vals[k])
    if 0 < k < n_grid - 1:
        res = minimize_scalar(
            lambda t: -float(pf.F(t, 2)) / pf.g_inf,
            bounds=(grid[k - 1], grid[k + 1]),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best = max(best, -float(res.fun))
    return -best


def delta_separation(pf: ProxFunction, u: float, s: int, cap: float = DELTA_CAP) -> float:
    """
    Certified upper bound on delta(u, s).

    Smallest delta (up to bisection tolerance) with
    2 * sum_{m=1}^{s-1} g_inf^(-i/2) envelope_i(m delta) <= u for every i in 0..3.
    Returns math.inf when no delta below cap works.
    """
    if not u > 0:
        raise DomainError(f"u must be positive, got {u}")
    if s < 1:
        raise DomainError(f"s must be at least 1, got {s}")
    if s == 1:
        return 0.0

    def ok(delta: float) -> bool:
        for i in range(4):
            total = 2.0 * sum(pf.g_inf ** (-i / 2) * pf.envelope(i, m * delta) for m in range(1, s))
            if total > u:
                return False
        return True

    if not ok(cap):
        logger.warning("delta(u=%s, s=%s) exceeds cap %s", u, s, cap)
        return math.inf
    lo, hi = 0.0, cap
    # shrink the bracket geometrically first; envelopes span many decades
    while hi > 1e-9 and ok(hi / 2):
        hi /= 2
    lo = hi / 2
    while hi - lo > 1e-9 * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ProxConstants:
    g_inf: float
    r: float
    eps_half_r: float
    nu_two_r: float
    H1: float
    H2: float
    L: dict[int, float] = field(default_factory=dict)


def h_infinity_bounds(pf: ProxFunction, r: float) -> ProxConstants:
    """H1(r) and H2(r) from L_i, epsilon(r/2) and nu(2r)."""
    if not r > 0:
        raise DomainError(f"r must be positive, got {r}")
    eps = epsilon_of(pf, r / 2)
    nu = nu_of(pf, 2 * r)
    if eps <= 0:
        raise AssumptionViolation(f"epsilon(r/2) <= 0 for r={r} ({eps:.6g})")
    if nu <= 0:
        raise AssumptionViolation(f"nu(2r) <= 0 for r={r} ({nu:.6g})")
    cap = validity_cap(pf)
    if r >= cap:
        raise DomainError(f"r={r} outside the admissible range (0, {cap:.6g})")
    L = lipschitz_constants(pf)
    h1 = min(0.5, L[2], L[3], L[4], L[6], nu / 10, eps / 10)
    h2 = min(
        1.0 / 6,
        8 * eps / (10 * (5 + 2 * L[1])),
        8 * nu / (9 * (2 * L[2] + 2 * L[3] + 4)),
    )
    return ProxConstants(g_inf=pf.g_inf, r=r, eps_half_r=eps, nu_two_r=nu, H1=h1, H2=h2, L=L)


def separation_requirement(pf: ProxFunction, eta: float, r: float, s: int) -> float:
    """Sigma(eta, r, s) = 4 max(r g_inf^(-1/2), 2 delta(eta H2(r), s)); multiply by sigma_T for locations."""
    if not 0 < eta < 1:
        raise DomainError(f"eta must be in (0, 1), got {eta}")
    consts = h_infinity_bounds(pf, r)
    delta = delta_separation(pf, eta * consts.H2, s)
    return 4.0 * max(r / math.sqrt(pf.g_inf), 2.0 * delta)


def constants_table(pf: ProxFunction, eta: float, r: float, s: int) -> list[tuple[str, float]]:
    """Rows (name, value) for the constants dump."""
    consts = h_infinity_bounds(pf, r)
    rows: list[tuple[str, float]] = [("g_inf", pf.g_inf)]
    rows += [(f"L{i}", v) for i, v in sorted(consts.L.items())]
    rows += [
        ("r", r),
        ("eta", eta),
        ("s", float(s)),
        ("epsilon(r/2)", consts.eps_half_r),
        ("nu(2r)", consts.nu_two_r),
        ("H1", consts.H1),
        ("H2", consts.H2),
        ("delta(eta*H2,s)", delta_separation(pf, eta * consts.H2, s)),
        ("Sigma", separation_requirement(pf, eta, r, s)),
    ]
    return rows
