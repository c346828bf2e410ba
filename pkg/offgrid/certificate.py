"""
Interpolating certificates p = sum alpha_k phi_T(theta_k) + sum xi_k D1[phi_T](theta_k)
with <phi_T(theta_k), p> = v_k and vanishing derivative at every anchor, and a
grid verifier that measures the near-region curvature C_N, the far-region gap
C_F and the norm constant C_B.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve

from offgrid.dictionary import Dictionary
from offgrid.errors import DomainError, SeparationViolation
from offgrid.signal import Mixture

logger = logging.getLogger("offgrid.certificate")

COND_LIMIT = 1e12
# Points this close (in d_T) to an anchor carry no usable curvature information.
NEAR_EXCLUSION = 1e-3
SCAN_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class Certificate:
    alpha: np.ndarray
    xi: np.ndarray
    rep: np.ndarray
    anchors: np.ndarray
    signs: np.ndarray
    residual: float

    @property
    def s(self) -> int:
        return int(self.anchors.size)


def build_certificate(dictionary: Dictionary, anchors, signs) -> Certificate:
    """Solve the 2s x 2s interpolation system for (alpha, xi)."""
    Q = dictionary.check_locations(anchors)
    v = np.atleast_1d(np.asarray(signs, dtype=float))
    if Q.size == 0:
        raise DomainError("a certificate needs at least one anchor")
    if v.shape != Q.shape:
        raise DomainError(f"{Q.size} anchors but {v.size} signs")
    if not np.all(np.abs(v) == 1):
        raise DomainError("certificate signs must be +1 or -1")
    s = Q.size
    phi, d1 = dictionary.covariant(Q, 1)
    A = np.vstack([phi, d1])
    M = dictionary.inner(A, A)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SeparationViolation(f"certificate system is singular (condition number {cond:.3g})")
    rhs = np.concatenate([v, np.zeros(s)])
    x = solve(M, rhs, assume_a="sym")
    # one step of iterative refinement
    x = x + solve(M, rhs - M @ x, assume_a="sym")
    p = x @ A
    residual = float(np.max(np.abs(dictionary.inner(A, p[None, :])[:, 0] - rhs)))
    logger.debug("certificate: s=%s cond=%.3g residual=%.3g", s, cond, residual)
    return Certificate(alpha=x[:s], xi=x[s:], rep=p, anchors=Q, signs=v, residual=residual)


def dual_pairing(c: Certificate, m: Mixture, dictionary: Dictionary) -> float:
    """<beta Phi_T(theta), p>."""
    if m.s == 0:
        return 0.0
    return float(dictionary.inner(dictionary.synthesize(m.beta, m.theta)[None, :], c.rep[None, :])[0, 0])


def certificate_profile(c: Certificate, dictionary: Dictionary, thetas: np.ndarray, threads: int = 1) -> np.ndarray:
    """eta(theta) = <phi_T(theta), p> over thetas, evaluated in chunks."""
    thetas = np.asarray(thetas, dtype=float)
    chunks = [thetas[i : i + SCAN_CHUNK] for i in range(0, thetas.size, SCAN_CHUNK)]

    def run(block: np.ndarray) -> np.ndarray:
        return dictionary.inner(dictionary.features(block), c.rep[None, :])[:, 0]

    if threads <= 1 or len(chunks) <= 1:
        parts = [run(b) for b in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass(frozen=True, eq=False)
class AnchorReport:
    theta: float
    sign: float
    C_N: float
    near_points: int


@dataclass(frozen=True, eq=False)
class CertificateReport:
    C_N: float
    C_F: float
    C_B: float
    max_residual: float
    anchors: list[AnchorReport] = field(default_factory=list)
    far_points: int = 0
    grid: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    profile: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def passed(self) -> bool:
        return self.C_N > 0 and self.C_F > 0

    def rows(self) -> list[tuple[str, float, float]]:
        """(quantity, anchor location or nan, value) rows for CSV output."""
        out = [("C_N", math.nan, self.C_N), ("C_F", math.nan, self.C_F), ("C_B", math.nan, self.C_B)]
        out += [("C_N_anchor", a.theta, a.C_N) for a in self.anchors]
        out.append(("residual", math.nan, self.max_residual))
        out.append(("passed", math.nan, float(self.passed)))
        return out


def verify_certificate(
    c: Certificate, dictionary: Dictionary, r: float, grid_step: float | None = None, threads: int = 1
) -> CertificateReport:
    """Scan |<phi_T(theta), p>| on a grid; failures are reported, not raised."""
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r}")
    step = grid_step if grid_step is not None else dictionary.sigma / 20
    if step > dictionary.sigma / 20 * (1 + 1e-12):
        raise DomainError(f"grid step {step} exceeds sigma/20 = {dictionary.sigma / 20}")
    grid = np.union1d(dictionary.scan_grid(step), c.anchors)
    eta = certificate_profile(c, dictionary, grid, threads)
    acc = dictionary.metric()
    dist = np.stack([np.atleast_1d(acc.distance(grid, q)) for q in c.anchors])
    nearest = dist.min(axis=0)

    anchor_reports = []
    for k, q in enumerate(c.anchors):
        mask = (dist[k] <= r) & (dist[k] >= NEAR_EXCLUSION)
        if np.any(mask):
            ratio = (1.0 - np.abs(eta[mask])) / dist[k][mask] ** 2
            cn = max(float(np.min(ratio)), 0.0)
        else:
            cn = math.inf
        anchor_reports.append(AnchorReport(theta=float(q), sign=float(c.signs[k]), C_N=cn, near_points=int(mask.sum())))
    far = nearest > r
    cf = 1.0 - float(np.max(np.abs(eta[far]))) if np.any(far) else 1.0
    cn_global = min(a.C_N for a in anchor_reports)
    cb = math.sqrt(dictionary.inner(c.rep[None, :], c.rep[None, :])[0, 0] / c.s)
    report = CertificateReport(
        C_N=cn_global,
        C_F=cf,
        C_B=cb,
        max_residual=c.residual,
        anchors=anchor_reports,
        far_points=int(far.sum()),
        grid=grid,
        profile=eta,
    )
    if not report.passed:
        logger.warning("certificate check failed: C_N=%.6g C_F=%.6g", cn_global, cf)
    return report
