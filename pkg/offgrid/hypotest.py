"""
Goodness-of-fit tests against a known mixture or a signed support:

- T1: centered squared residual norm against the null signal;
- T2: plug-in distance between the fitted and the null signal;
- T3: l1 norm of the fit minus the certificate pairing <y, p0>;

their thresholds, separation rates, the aggregated max test and the
discrepancy D_{T,r} between a mixture and a signed null support.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from offgrid.certificate import Certificate, build_certificate
from offgrid.dictionary import Dictionary, MetricAccumulator
from offgrid.errors import DomainError, PreconditionError
from offgrid.noise import NoiseModel
from offgrid.signal import Mixture
from offgrid.solver import FitResult, SolverConfig, fit

logger = logging.getLogger("offgrid.hypotest")

Which = Literal["T1", "T2", "T3", "MAX"]
TESTS: tuple[str, ...] = ("T1", "T2", "T3", "MAX")


@dataclass(frozen=True, eq=False)
class NullSpec:
    """
    Null mixture beta0 Phi_T(theta0). s0 = 0 encodes signal detection.

    For the dictionary test only the anchors theta0 and the signs v0 matter;
    when `signs` is omitted they are taken from sign(beta0).
    """

    mixture: Mixture
    signs: np.ndarray | None = None

    def __post_init__(self) -> None:
        m = self.mixture
        if np.any(m.beta == 0):
            raise DomainError("null coefficients must be nonzero")
        if self.signs is not None:
            v = np.asarray(self.signs, dtype=float)
            if v.shape != m.theta.shape or not np.all(np.abs(v) == 1):
                raise DomainError("null signs must be one +1/-1 entry per anchor")

    @classmethod
    def detection(cls) -> NullSpec:
        return cls(Mixture.empty())

    @classmethod
    def signed_support(cls, anchors, signs) -> NullSpec:
        v = np.atleast_1d(np.asarray(signs, dtype=float))
        return cls(Mixture(v.copy(), np.atleast_1d(np.asarray(anchors, dtype=float))), v)

    @property
    def s0(self) -> int:
        return self.mixture.s

    @property
    def anchors(self) -> np.ndarray:
        return self.mixture.theta

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.signs, dtype=float) if self.signs is not None else np.sign(self.mixture.beta)


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    statistic: float
    threshold: float
    reject: bool
    which: Which
    components: tuple[TestOutcome, ...] = ()

    @classmethod
    def decide(cls, statistic: float, threshold: float, which: str) -> TestOutcome:
        return cls(statistic=statistic, threshold=threshold, reject=bool(abs(statistic) > threshold), which=which)


@dataclass(frozen=True)
class TestConstants:
    """Constants of the rates and thresholds; C4/C5 default to 2 C3/(C_N ^ C_F) and 2/(C_N ^ C_F)."""

    __test__ = False

    C0: float = 1.0
    C1: float = 2.0
    C3: float = 1.0
    C4: float | None = None
    C5: float | None = None
    C_N: float = 1.0
    C_F: float = 1.0
    c: float = math.e
    C: float | None = None

    @property
    def c4(self) -> float:
        return self.C4 if self.C4 is not None else 2.0 * self.C3 / min(self.C_N, self.C_F)

    @property
    def c5(self) -> float:
        return self.C5 if self.C5 is not None else 2.0 / min(self.C_N, self.C_F)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def null_signal(null: NullSpec, dictionary: Dictionary) -> np.ndarray:
    return dictionary.synthesize(null.mixture.beta, null.mixture.theta)


def stat_T1(y: np.ndarray, null: NullSpec, dictionary: Dictionary, nm: NoiseModel) -> float:
    """||y - beta0 Phi_T(theta0)||^2 - E||w_T||^2."""
    r = dictionary.measure.check(y) - null_signal(null, dictionary)
    return dictionary.norm(r) ** 2 - nm.expected_sq_norm


def stat_T2(
    y: np.ndarray, null: NullSpec, dictionary: Dictionary, cfg: SolverConfig, fit_result: FitResult | None = None
) -> float:
    """||beta_hat Phi_T(theta_hat) - beta0 Phi_T(theta0)||^2."""
    res = fit_result if fit_result is not None else fit(y, dictionary, cfg)
    m = res.mixture
    diff = dictionary.synthesize(m.beta, m.theta) - null_signal(null, dictionary)
    return dictionary.norm(diff) ** 2


def null_certificate(null: NullSpec, dictionary: Dictionary) -> Certificate | None:
    if null.s0 == 0:
        return None
    return build_certificate(dictionary, null.anchors, null.v)


def stat_T3(
    y: np.ndarray,
    null: NullSpec,
    dictionary: Dictionary,
    cfg: SolverConfig,
    certificate: Certificate | None = None,
    fit_result: FitResult | None = None,
) -> float:
    """||beta_hat||_1 - <y, p0>; p0 = 0 when the null support is empty."""
    y = dictionary.measure.check(y)
    res = fit_result if fit_result is not None else fit(y, dictionary, cfg)
    cert = certificate if certificate is not None else null_certificate(null, dictionary)
    pairing = 0.0 if cert is None else float(dictionary.inner(y[None, :], cert.rep[None, :])[0, 0])
    return res.mixture.l1() - pairing


# ---------------------------------------------------------------------------
# Thresholds and separation rates
# ---------------------------------------------------------------------------


def threshold_T1(rho: float) -> float:
    if rho < 0:
        raise DomainError(f"separation must be nonnegative, got {rho}")
    return rho * rho / 2.0


def risk_bound_T1(rho: float, t: float, nm: NoiseModel) -> float:
    """Xi/t^2 + 4 Xi/(rho^2 - t)^2 + exp(-(rho^2 - t)^2 / (32 sigma_bar^2 Delta rho^2)), clipped at 2."""
    if not (t > 0 and rho * rho > t):
        raise DomainError(f"need rho^2 > t > 0, got rho={rho}, t={t}")
    xi = nm.xi_var
    gap = rho * rho - t
    scale = 32.0 * nm.sigma_bar**2 * nm.delta * rho * rho
    tail = math.exp(-gap * gap / scale) if scale > 0 else 0.0
    return min(xi / t**2 + 4.0 * xi / gap**2 + tail, 2.0)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")


def rho1(alpha: float, nm: NoiseModel) -> float:
    """max((40 Xi/alpha)^(1/4), 8 sigma_bar sqrt(2 Delta log(2/alpha)))."""
    _check_alpha(alpha)
    return max(
        (40.0 * nm.xi_var / alpha) ** 0.25,
        8.0 * nm.sigma_bar * math.sqrt(2.0 * nm.delta * math.log(2.0 / alpha)),
    )


@dataclass(frozen=True)
class SeparationRate:
    rho: float
    t: float
    closed_form: float = math.nan
    warnings: list[str] = field(default_factory=list)


def _log_term(alpha: float, c: float, width: float, sigma: float, factor: float = 1.0) -> tuple[float, list[str]]:
    warnings = []
    ratio = width / sigma
    if ratio < 1:
        warnings.append(f"|Theta_T|/sigma_T = {ratio:.6g} < 1; closed-form rate outside its range")
        logger.warning(warnings[-1])
    return math.log(factor * c * ratio / alpha), warnings


def rho2(
    alpha: float,
    s: int,
    s0: int,
    kappa: float,
    consts: TestConstants,
    nm: NoiseModel | None = None,
    width: float | None = None,
    sigma: float | None = None,
) -> SeparationRate:
    """t = C0^2 (s0 v 1) kappa^2 and rho = C0 sqrt(s v 1) kappa + sqrt(t); closed form when geometry is given."""
    _check_alpha(alpha)
    t = consts.C0**2 * max(s0, 1) * kappa**2
    rho = consts.C0 * math.sqrt(max(s, 1)) * kappa + math.sqrt(t)
    closed, warnings = math.nan, []
    if nm is not None and width is not None and sigma is not None:
        C = consts.C if consts.C is not None else 2.0 * consts.C0 * consts.C1
        log_val, warnings = _log_term(alpha, consts.c, width, sigma)
        closed = C * nm.sigma_bar * math.sqrt(max(s, s0, 1) * nm.delta * max(log_val, 0.0))
    return SeparationRate(rho=rho, t=t, closed_form=closed, warnings=warnings)


def rho3(
    alpha: float,
    s: int,
    s0: int,
    kappa: float,
    consts: TestConstants,
    nm: NoiseModel | None = None,
    width: float | None = None,
    sigma: float | None = None,
) -> SeparationRate:
    """t = 2 C3 s0 kappa and rho = C4 s kappa + C5 t for the dictionary test."""
    _check_alpha(alpha)
    t = 2.0 * consts.C3 * s0 * kappa
    rho = consts.c4 * s * kappa + consts.c5 * t
    closed, warnings = math.nan, []
    if nm is not None and width is not None and sigma is not None:
        C = consts.C if consts.C is not None else 2.0 * consts.C1 * max(2.0 * consts.C3 * consts.c5, consts.c4)
        log_val, warnings = _log_term(alpha, consts.c, width, sigma)
        closed = C * nm.sigma_bar * max(s, s0) * math.sqrt(nm.delta * max(log_val, 0.0))
    return SeparationRate(rho=rho, t=t, closed_form=closed, warnings=warnings)


@dataclass(frozen=True)
class RhoMin:
    value: float
    dense: float
    sparse: float

    @property
    def binding(self) -> str:
        return "dense" if self.dense <= self.sparse else "sparse"


def rho_min(
    alpha: float, s: int, s0: int, nm: NoiseModel, width: float, sigma: float, consts: TestConstants | None = None
) -> RhoMin:
    """min((80 Xi/alpha)^(1/4), C sigma_bar sqrt((s v s0 v 1) Delta log(2c|Theta|/(alpha sigma))))."""
    _check_alpha(alpha)
    consts = consts or TestConstants()
    C = consts.C if consts.C is not None else 2.0 * consts.C0 * consts.C1
    dense = (80.0 * nm.xi_var / alpha) ** 0.25
    log_val, _ = _log_term(alpha, consts.c, width, sigma, factor=2.0)
    sparse = C * nm.sigma_bar * math.sqrt(max(s, s0, 1) * nm.delta * max(log_val, 0.0))
    return RhoMin(value=min(dense, sparse), dense=dense, sparse=sparse)


def sup_noise_tail_bound(kappa: float, tau: float, g_inf: float, width: float, sigma: float) -> float:
    """3 max(sqrt(g_inf)|Theta|/(sigma tau sqrt(log tau)), 1/tau), valid for kappa >= 2 sigma_bar sqrt(Delta log tau)."""
    if not tau > 1:
        raise DomainError(f"tau must exceed 1, got {tau}")
    if kappa < 0:
        raise DomainError(f"kappa must be nonnegative, got {kappa}")
    return 3.0 * max(math.sqrt(g_inf) * width / (sigma * tau * math.sqrt(math.log(tau))), 1.0 / tau)


# ---------------------------------------------------------------------------
# Discrepancy
# ---------------------------------------------------------------------------


def _null_radius_check(null: NullSpec, acc: MetricAccumulator, r: float) -> None:
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r}")
    Q = null.anchors
    if Q.size > 1:
        d = np.array([[acc.distance(a, b) for b in Q] for a in Q])
        np.fill_diagonal(d, np.inf)
        if r >= d.min() / 2:
            raise PreconditionError(f"r={r} is not below half the minimal anchor distance {d.min() / 2:.6g}")


def discrepancy(m: Mixture, null: NullSpec, acc: MetricAccumulator, r: float) -> float:
    """D_{T,r}: |beta| d_T^2 for matching-sign spikes near an anchor, |beta| for the rest."""
    _null_radius_check(null, acc, r)
    Q, v = null.anchors, null.v
    total = 0.0
    for b, th in zip(m.beta, m.theta):
        near = None
        for k, q in enumerate(Q):
            d = float(acc.distance(th, q))
            if d <= r and np.sign(b) == v[k]:
                near = d
                break
        total += abs(b) * near**2 if near is not None else abs(b)
    return float(total)


def support_contained(m: Mixture, null: NullSpec, tol: float = 1e-12) -> bool:
    """Q*^+ within Q0^+ and Q*^- within Q0^-, locations matched to tol."""
    Q, v = null.anchors, null.v
    for b, th in zip(m.beta, m.theta):
        hit = np.abs(Q - th) <= tol * max(1.0, abs(th))
        if not np.any(hit & (v == np.sign(b))):
            return False
    return True


# ---------------------------------------------------------------------------
# Decisions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TestParams:
    """Everything a decision needs besides the observation."""

    __test__ = False

    dictionary: Dictionary
    nm: NoiseModel
    solver: SolverConfig
    thresholds: dict[str, float]
    certificate: Certificate | None = None


def run_test(
    y: np.ndarray, null: NullSpec, which: Which, params: TestParams, fit_result: FitResult | None = None
) -> TestOutcome:
    if which == "MAX":
        return run_max_test(y, null, params, fit_result)
    if which not in params.thresholds:
        raise DomainError(f"no threshold configured for {which}")
    t = params.thresholds[which]
    d = params.dictionary
    if which == "T1":
        stat = stat_T1(y, null, d, params.nm)
    elif which == "T2":
        stat = stat_T2(y, null, d, params.solver, fit_result)
    elif which == "T3":
        cert = params.certificate if params.certificate is not None else null_certificate(null, d)
        stat = stat_T3(y, null, d, params.solver, cert, fit_result)
    else:
        raise DomainError(f"unknown test {which!r}; expected one of {TESTS}")
    return TestOutcome.decide(stat, t, which)


def run_max_test(
    y: np.ndarray, null: NullSpec, params: TestParams, fit_result: FitResult | None = None
) -> TestOutcome:
    """Reject iff T1 or T2 rejects; thresholds are expected at level alpha/2 each."""
    res = fit_result if fit_result is not None else fit(y, params.dictionary, params.solver)
    o1 = run_test(y, null, "T1", params)
    o2 = run_test(y, null, "T2", params, res)
    return TestOutcome(
        statistic=max(abs(o1.statistic) - o1.threshold, abs(o2.statistic) - o2.threshold),
        threshold=0.0,
        reject=o1.reject or o2.reject,
        which="MAX",
        components=(o1, o2),
    )
