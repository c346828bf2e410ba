"""
Kernel approximation diagnostics: the metric equivalence constant C_T, the sup
distance V_T between the empirical kernel and its translation-invariant limit,
and an end-to-end check of the standing assumptions (regularity, properties of
F, proximity, separation).

Sups over Theta_T^2 are taken on (coarse theta) x (fine theta') scans with
|theta - theta'| up to min(|Theta_T|, 40 sigma_T) (the half circle on the torus).
Both grids are anchored at the left end of Theta_T so halving the step only
adds points.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from offgrid.dictionary import Dictionary, scan_points, wrap_offset
from offgrid.errors import AssumptionViolation, DomainError, PositivityError
from offgrid.proxkernel import (
    ProxFunction,
    h_infinity_bounds,
    prox_kernel_derivative,
    separation_requirement,
)

logger = logging.getLogger("offgrid.diagnostics")

ORDERS = ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2))
SPAN_SIGMAS = 40.0
COARSE_FACTOR = 10
ROW_CHUNK = 64


class KernelSource(ABC):
    """A kernel on Theta_T with covariant derivatives up to order 3."""

    sigma: float
    theta_window: tuple[float, float]
    is_torus: bool

    @property
    def width(self) -> float:
        return self.theta_window[1] - self.theta_window[0]

    def scan_grid(self, step: float) -> np.ndarray:
        return scan_points(self.theta_window, step, self.is_torus)

    @abstractmethod
    def blocks(self, thetas: np.ndarray, thetas_prime: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
        """K^[i,j](theta_a, theta'_b) for every (i, j) in ORDERS."""

    @abstractmethod
    def g_values(self, thetas: np.ndarray) -> np.ndarray:
        """g(theta) = K^[1,1](theta, theta) before normalization."""

    @abstractmethod
    def h_values(self, thetas: np.ndarray) -> np.ndarray:
        """h_K(theta) = K^[3,3](theta, theta)."""


class DictionaryKernelSource(KernelSource):
    def __init__(self, dictionary: Dictionary):
        self.dictionary = dictionary
        self.sigma = dictionary.sigma
        self.theta_window = dictionary.theta_window
        self.is_torus = dictionary.is_torus

    def blocks(self, thetas, thetas_prime):
        d = self.dictionary
        A = d.covariant(thetas, 2)
        tp = np.asarray(thetas_prime, dtype=float)
        B = d._cached(("covariant2", tp.tobytes()), lambda: d.covariant(tp, 2))
        return {(i, j): d.inner(A[i], B[j]) for i, j in ORDERS}

    def g_values(self, thetas):
        return self.dictionary.g_values(thetas)[0]

    def h_values(self, thetas):
        d3 = self.dictionary.covariant(thetas, 3)[3]
        return self.dictionary.measure.weight * np.einsum("ij,ij->i", d3, d3)


class ProxKernelSource(KernelSource):
    """The limit kernel itself, seen as a kernel source."""

    def __init__(self, pf: ProxFunction, sigma: float, theta_window: tuple[float, float], torus: bool = False):
        if not sigma > 0:
            raise DomainError(f"scale must be positive, got {sigma}")
        self.pf = pf
        self.sigma = float(sigma)
        self.theta_window = (float(theta_window[0]), float(theta_window[1]))
        self.is_torus = torus

    @classmethod
    def matching(cls, pf: ProxFunction, dictionary: Dictionary) -> ProxKernelSource:
        return cls(pf, dictionary.sigma, dictionary.theta_window, dictionary.is_torus)

    def blocks(self, thetas, thetas_prime):
        a = np.asarray(thetas, dtype=float)[:, None]
        b = np.asarray(thetas_prime, dtype=float)[None, :]
        return {
            (i, j): prox_kernel_derivative(self.pf, self.sigma, a, b, i, j, self.is_torus) for i, j in ORDERS
        }

    def g_values(self, thetas):
        return np.full(np.asarray(thetas).shape, self.pf.g_inf / self.sigma**2)

    def h_values(self, thetas):
        return np.full(np.asarray(thetas).shape, -self.pf.g_inf**-3 * float(self.pf.F(0.0, 6)))


def as_source(obj: Dictionary | KernelSource) -> KernelSource:
    return obj if isinstance(obj, KernelSource) else DictionaryKernelSource(obj)


# ---------------------------------------------------------------------------
# C_T and V_T
# ---------------------------------------------------------------------------


def compute_CT(source: Dictionary | KernelSource, pf: ProxFunction, grid_step: float | None = None) -> float:
    """max(sup sqrt(g_prox/g_T), sup sqrt(g_T/g_prox)) over the scan grid."""
    src = as_source(source)
    step = grid_step if grid_step is not None else src.sigma / 20
    grid = src.scan_grid(step)
    g = src.g_values(grid)
    if np.any(~np.isfinite(g)) or np.any(g <= 0):
        raise AssumptionViolation("g_T is not positive on the scan grid")
    g_prox = pf.g_inf / src.sigma**2
    ratio = g_prox / g
    return float(max(np.max(np.sqrt(ratio)), np.max(np.sqrt(1.0 / ratio))))


@dataclass(frozen=True, eq=False)
class ApproxReport:
    C_T: float
    V1: float
    V2: float
    grid_step: float
    sups: dict[tuple[int, int], float] = field(default_factory=dict)
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    profile: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def V_T(self) -> float:
        return max(self.V1, self.V2)

    def rows(self) -> list[tuple[str, float]]:
        out = [("C_T", self.C_T), ("V1", self.V1), ("V2", self.V2), ("V_T", self.V_T), ("grid_step", self.grid_step)]
        out += [(f"V1[{i},{j}]", v) for (i, j), v in sorted(self.sups.items())]
        return out


def _scan_span(src: KernelSource) -> float:
    if src.is_torus:
        return 0.5
    return min(src.width, SPAN_SIGMAS * src.sigma)


def compute_VT(
    source: Dictionary | KernelSource,
    pf: ProxFunction,
    grid_step: float | None = None,
    threads: int = 1,
) -> ApproxReport:
    """Sup distances between K_T^[i,j] and K_prox^[i,j] (V1) and between h_K's (V2)."""
    src = as_source(source)
    step = grid_step if grid_step is not None else src.sigma / 20
    if step > src.sigma / 10 * (1 + 1e-12):
        raise DomainError(f"grid step {step} exceeds sigma/10 = {src.sigma / 10}")
    prox = ProxKernelSource(pf, src.sigma, src.theta_window, src.is_torus)
    fine = src.scan_grid(step)
    coarse = fine[::COARSE_FACTOR]
    span = _scan_span(src)
    n_bins = int(math.floor(span / step + 1e-9)) + 1

    def scan(rows: np.ndarray):
        emp = src.blocks(rows, fine)
        ref = prox.blocks(rows, fine)
        off = fine[None, :] - rows[:, None]
        if src.is_torus:
            off = wrap_offset(off)
        mask = np.abs(off) <= span + 1e-12
        sups = {}
        worst = np.zeros(off.shape)
        for key in ORDERS:
            diff = np.where(mask, np.abs(emp[key] - ref[key]), 0.0)
            sups[key] = float(diff.max())
            np.maximum(worst, diff, out=worst)
        bins = np.minimum(np.rint(np.abs(off[mask]) / step).astype(int), n_bins - 1)
        profile = np.zeros(n_bins)
        np.maximum.at(profile, bins, worst[mask])
        return sups, profile

    chunks = [coarse[i : i + ROW_CHUNK] for i in range(0, coarse.size, ROW_CHUNK)]
    if threads <= 1 or len(chunks) <= 1:
        parts = [scan(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(scan, chunks))
    sups = {key: max(p[0][key] for p in parts) for key in ORDERS}
    profile = np.max(np.stack([p[1] for p in parts]), axis=0)

    h_grid = src.scan_grid(step / 2)
    V2 = float(np.max(np.abs(src.h_values(h_grid) - prox.h_values(h_grid))))
    report = ApproxReport(
        C_T=compute_CT(src, pf, step),
        V1=max(sups.values()),
        V2=V2,
        grid_step=step,
        sups=sups,
        offsets=step * np.arange(n_bins),
        profile=profile,
    )
    logger.info("kernel approximation: C_T=%.12g V1=%.6g V2=%.6g", report.C_T, report.V1, report.V2)
    return report


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def shrinkage_gamma(T: int, b: float, sigma: float, xi: float) -> float:
    """gamma_T = 2 Delta_T/sigma_T + sqrt(pi) exp(-xi^2 b^2 / 2 sigma^2) with Delta_T = 2b/T."""
    if T < 2 or not b > 0 or not sigma > 0 or not 0 < xi < 1:
        raise DomainError(f"invalid schedule T={T}, b={b}, sigma={sigma}, xi={xi}")
    delta = 2.0 * b / T
    return 2.0 * delta / sigma + math.sqrt(math.pi) * math.exp(-(xi**2) * b**2 / (2.0 * sigma**2))


@dataclass(frozen=True)
class LowpassBounds:
    C_T: float
    C_T_gap_bound: float


def lowpass_bounds(T: int) -> LowpassBounds:
    """C_T = T/sqrt(T^2 - 1) and the bound |1 - C_T| <= 1/(2(T^2 - 1))."""
    if T < 2:
        raise DomainError(f"T must be at least 2, got {T}")
    return LowpassBounds(C_T=T / math.sqrt(T * T - 1.0), C_T_gap_bound=1.0 / (2.0 * (T * T - 1.0)))


# ---------------------------------------------------------------------------
# Assumption check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionVerdict:
    regularity: bool
    f_properties: bool
    proximity: bool
    separation: bool
    margins: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.regularity and self.f_properties and self.proximity and self.separation

    def rows(self) -> list[tuple[str, float]]:
        flags = [
            ("regularity", float(self.regularity)),
            ("f_properties", float(self.f_properties)),
            ("proximity", float(self.proximity)),
            ("separation", float(self.separation)),
        ]
        return flags + sorted(self.margins.items())


def check_assumption(
    source: Dictionary | KernelSource,
    pf: ProxFunction,
    eta: float,
    r: float,
    s: int,
    Q=None,
    grid_step: float | None = None,
    report: ApproxReport | None = None,
    threads: int = 1,
) -> AssumptionVerdict:
    """Four-part verdict with margins; failures are carried, not raised."""
    src = as_source(source)
    step = grid_step if grid_step is not None else src.sigma / 20
    margins: dict[str, float] = {}
    notes: list[str] = []

    g = src.g_values(src.scan_grid(step))
    margins["min_g"] = float(np.min(g))
    regularity = bool(np.all(np.isfinite(g)) and margins["min_g"] > 0)

    consts = None
    try:
        consts = h_infinity_bounds(pf, r)
        margins["eps_half_r"] = consts.eps_half_r
        margins["nu_two_r"] = consts.nu_two_r
        margins["H1"] = consts.H1
        margins["H2"] = consts.H2
        f_properties = True
    except (AssumptionViolation, DomainError) as exc:
        notes.append(str(exc))
        f_properties = False

    proximity = False
    if regularity:
        try:
            rep = report if report is not None else compute_VT(src, pf, step, threads)
        except (PositivityError, AssumptionViolation) as exc:
            notes.append(str(exc))
            rep = None
        if rep is not None:
            margins["C_T"] = rep.C_T
            margins["V_T"] = rep.V_T
            margins["C_T_margin"] = 2.0 - rep.C_T
            if consts is not None:
                margins["H1_margin"] = consts.H1 - rep.V_T
                margins["H2_margin"] = (1.0 - eta) * consts.H2 - (s - 1) * rep.V_T
                proximity = margins["C_T_margin"] >= 0 and margins["H1_margin"] >= 0 and margins["H2_margin"] >= 0

    separation = True
    Q = np.atleast_1d(np.asarray(Q if Q is not None else [], dtype=float))
    if Q.size > 1:
        try:
            need = src.sigma * separation_requirement(pf, eta, r, s)
        except (AssumptionViolation, DomainError) as exc:
            notes.append(str(exc))
            need = math.inf
        diff = Q[:, None] - Q[None, :]
        if src.is_torus:
            diff = wrap_offset(diff)
        min_gap = float(np.abs(diff)[np.triu_indices(Q.size, 1)].min())
        margins["min_gap"] = min_gap
        margins["required_gap"] = need
        separation = min_gap > need

    verdict = AssumptionVerdict(regularity, f_properties, proximity, separation, margins, notes)
    for name in ("regularity", "f_properties", "proximity", "separation"):
        if not getattr(verdict, name):
            logger.warning("assumption check: %s fails", name)
    return verdict
