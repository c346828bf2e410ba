"""
Monte Carlo engine: empirical type I/II errors and risk curves over a
separation grid, the detection sweep over (s, T), calibration of the
prediction and l1 constants, and per-replicate test batches.

Replicate i always uses the noise draw keyed by (base_seed, i), so H0 and
every alternative share their noise and results do not depend on threading.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, TypeVar

import numpy as np

from offgrid.certificate import Certificate, verify_certificate
from offgrid.dictionary import Dictionary
from offgrid.errors import DomainError, NumericalViolation, OffgridError
from offgrid.hypotest import (
    NullSpec,
    TestConstants,
    discrepancy,
    null_certificate,
    risk_bound_T1,
    rho1,
    rho2,
    rho3,
    rho_min,
    stat_T1,
    stat_T2,
    stat_T3,
    threshold_T1,
)
from offgrid.noise import NoiseModel, replicate_rng, sample_noise
from offgrid.presets import (
    build_constants,
    build_dictionary,
    build_mixture,
    build_noise,
    build_null,
    build_solver_config,
    torus_dictionary,
)
from offgrid.schemas import ScenarioConfig
from offgrid.signal import Mixture, gram_extreme_ratios
from offgrid.solver import SolverConfig, default_kappa, fit, l1_gap, prediction_error

logger = logging.getLogger("offgrid.harness")

R = TypeVar("R")

ALT_TOLERANCE = 0.01
# Floor on kappa when normalizing calibration errors of noiseless runs.
KAPPA_FLOOR = 1e-8


def map_replicates(fn: Callable[[int], R], n: int, threads: int = 1) -> list[R]:
    """[fn(0), ..., fn(n-1)] in index order, optionally on a thread pool."""
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    scenario_id: str
    dictionary: Dictionary
    nm: NoiseModel
    null: NullSpec
    solver: SolverConfig
    consts: TestConstants
    generator: str = "amplitude"
    direction: Mixture = field(default_factory=Mixture.empty)
    rho_grid: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    N: int = 200
    base_seed: int = 0
    which: tuple[str, ...] = ("T1",)
    alpha: float = 0.1
    r: float = 0.4
    signal: Mixture | None = None
    thresholds: dict[str, float] = field(default_factory=dict)
    rho: float | None = None
    threads: int = 1
    max_failure_rate: float = 0.01

    def __post_init__(self) -> None:
        if self.N < 1:
            raise DomainError(f"replicate count must be positive, got {self.N}")
        g = np.asarray(self.rho_grid, dtype=float)
        if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
            raise DomainError("rho grid must be positive and strictly increasing")
        if self.generator not in ("amplitude", "off-support"):
            raise DomainError(f"unknown alternative generator {self.generator!r}")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, calibrated: dict | None = None, threads: int = 1) -> Scenario:
        d = build_dictionary(cfg.dictionary)
        nm = build_noise(cfg.noise, d)
        direction = (
            Mixture.relaxed(cfg.alt.beta, d.check_locations(cfg.alt.theta)) if cfg.alt.beta else Mixture.empty()
        )
        signal = build_mixture(cfg.signal, d) if cfg.signal.beta else None
        return cls(
            scenario_id=cfg.scenario_id,
            dictionary=d,
            nm=nm,
            null=build_null(cfg.null, d),
            solver=build_solver_config(cfg.solver, nm, d),
            consts=build_constants(cfg.constants, calibrated),
            generator=cfg.alt.generator,
            direction=direction,
            rho_grid=np.asarray(cfg.alt.rho_grid, dtype=float),
            N=cfg.mc.replicates,
            base_seed=cfg.seed,
            which=tuple(cfg.test.which),
            alpha=cfg.test.alpha,
            r=cfg.test.r,
            signal=signal,
            thresholds=dict(cfg.test.thresholds),
            rho=cfg.test.rho,
            threads=threads,
            max_failure_rate=cfg.mc.max_failure_rate,
        )

    @property
    def needs_fit(self) -> bool:
        return any(w in ("T2", "T3", "MAX") for w in self.which)


def thresholds_for(sc: Scenario, rho: float | None = None) -> dict[str, float]:
    """T1 at rho^2/2 (rho from the argument, the scenario or rho1), T2 from rho2, T3 from rho3."""
    kappa = sc.solver.kappa
    out: dict[str, float] = {}
    if "T1" in sc.thresholds:
        out["T1"] = sc.thresholds["T1"]
    else:
        level = sc.alpha / 2 if "MAX" in sc.which else sc.alpha
        out["T1"] = threshold_T1(rho if rho is not None else sc.rho if sc.rho is not None else rho1(level, sc.nm))
    out["T2"] = sc.thresholds.get("T2", rho2(sc.alpha, sc.null.s0, sc.null.s0, kappa, sc.consts).t)
    out["T3"] = sc.thresholds.get("T3", rho3(sc.alpha, sc.null.s0, sc.null.s0, kappa, sc.consts).t)
    return out


def decide(which: str, stats: dict[str, float], th: dict[str, float]) -> bool:
    if which == "MAX":
        return decide("T1", stats, th) or decide("T2", stats, th)
    return bool(abs(stats[which]) > th[which])


# ---------------------------------------------------------------------------
# Data generation
# ---------------------------------------------------------------------------


def _merge_mixtures(a: Mixture, b: Mixture, dictionary: Dictionary) -> Mixture:
    """a + b with coefficients of coincident locations summed and zeros dropped."""
    beta = list(a.beta)
    theta = list(a.theta)
    for bb, tt in zip(b.beta, b.theta):
        hit = [k for k, t in enumerate(theta) if abs(float(dictionary.offset(t, tt))) <= 1e-12 * dictionary.width]
        if hit:
            beta[hit[0]] += bb
        else:
            beta.append(bb)
            theta.append(tt)
    keep = [k for k, v in enumerate(beta) if v != 0]
    return Mixture(np.asarray([beta[k] for k in keep]), np.asarray([theta[k] for k in keep]))


def generate_alternative(sc: Scenario, rho: float) -> Mixture:
    """Mixture at separation rho from the null; checked to 1% of the target."""
    d = sc.dictionary
    if sc.generator == "amplitude":
        if sc.direction.s == 0:
            raise DomainError("the amplitude generator needs a nonempty direction mixture")
        norm = d.norm(d.synthesize(sc.direction.beta, sc.direction.theta))
        if not norm > 0:
            raise DomainError("direction mixture has zero norm")
        alt = _merge_mixtures(sc.null.mixture, sc.direction.scaled(rho / norm), d)
        achieved = d.norm(d.synthesize(alt.beta, alt.theta) - d.synthesize(sc.null.mixture.beta, sc.null.mixture.theta))
    else:
        if sc.direction.s == 0:
            raise DomainError("the off-support generator needs at least one spike location")
        signs = np.where(sc.direction.beta < 0, -1.0, 1.0)
        spikes = Mixture(signs * rho / sc.direction.s, sc.direction.theta.copy())
        alt = _merge_mixtures(sc.null.mixture, spikes, d)
        achieved = discrepancy(alt, sc.null, d.metric(), sc.r)
    if abs(achieved - rho) > ALT_TOLERANCE * rho:
        raise DomainError(f"alternative reaches {achieved:.6g} instead of the target {rho:.6g}")
    return alt


def null_sample(sc: Scenario, replicate: int) -> Mixture:
    """H0 signal; signed-support nulls get positive rescalings drawn per replicate."""
    m = sc.null.mixture
    if sc.null.signs is None or m.s == 0:
        return m
    scale = replicate_rng(sc.base_seed, replicate, stream=1).uniform(0.5, 1.5, size=m.s)
    return Mixture(sc.null.v * np.abs(m.beta) * scale, m.theta.copy())


# ---------------------------------------------------------------------------
# Replicates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplicateStats:
    replicate: int
    stats: dict[str, float] = field(default_factory=dict)
    converged: bool = True
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def replicate_statistics(
    sc: Scenario, mixture: Mixture, replicate: int, cert: Certificate | None = None
) -> ReplicateStats:
    """All statistics the scenario needs on one observation; failures are recorded."""
    d = sc.dictionary
    try:
        y = d.synthesize(mixture.beta, mixture.theta) + sample_noise(sc.nm, d.measure, sc.base_seed, replicate)
        stats = {"T1": stat_T1(y, sc.null, d, sc.nm)}
        converged = True
        if sc.needs_fit:
            res = fit(y, d, sc.solver)
            converged = res.converged
            stats["T2"] = stat_T2(y, sc.null, d, sc.solver, res)
            if "T3" in sc.which:
                stats["T3"] = stat_T3(y, sc.null, d, sc.solver, cert, res)
        return ReplicateStats(replicate, stats, converged)
    except (OffgridError, FloatingPointError) as exc:
        logger.warning("replicate %s failed: %s", replicate, exc)
        return ReplicateStats(replicate, {}, False, str(exc))


def _rate(flags: list[bool]) -> tuple[float, float]:
    n = len(flags)
    if n == 0:
        return math.nan, math.nan
    p = float(np.mean(flags))
    return p, math.sqrt(p * (1.0 - p) / n)


# ---------------------------------------------------------------------------
# Risk curves
# ---------------------------------------------------------------------------

RISK_HEADER = (
    "scenario_id", "which", "rho", "threshold", "type_I", "type_II", "total",
    "se_I", "se_II", "bound", "n_h0", "n_h1", "failures",
)


@dataclass(frozen=True)
class RiskRow:
    which: str
    rho: float
    threshold: float
    type_I: float
    type_II: float
    se_I: float
    se_II: float
    bound: float
    n_h0: int
    n_h1: int
    failures: int

    @property
    def total(self) -> float:
        return self.type_I + self.type_II


@dataclass(frozen=True)
class RiskTable:
    scenario_id: str
    rows: list[RiskRow]
    failures: int
    replicates: int
    max_failure_rate: float = 0.01

    @property
    def failed(self) -> bool:
        return self.replicates > 0 and self.failures / self.replicates > self.max_failure_rate

    def records(self) -> list[tuple]:
        return [
            (self.scenario_id, r.which, r.rho, r.threshold, r.type_I, r.type_II, r.total,
             r.se_I, r.se_II, r.bound, r.n_h0, r.n_h1, r.failures)
            for r in self.rows
        ]


def _bound(which: str, rho: float, t: float, nm: NoiseModel) -> float:
    if which != "T1" or not (t > 0 and rho * rho > t):
        return math.nan
    return risk_bound_T1(rho, t, nm)


def run_risk_curve(sc: Scenario) -> RiskTable:
    """Empirical type I/II errors per rho; deterministic given the base seed."""
    cert = null_certificate(sc.null, sc.dictionary) if "T3" in sc.which else None
    logger.info("risk curve %s: %s replicates x (1 + %s) hypotheses", sc.scenario_id, sc.N, len(sc.rho_grid))
    h0 = map_replicates(lambda i: replicate_statistics(sc, null_sample(sc, i), i, cert), sc.N, sc.threads)
    rows: list[RiskRow] = []
    failures = sum(1 for r in h0 if not (r.ok and r.converged))
    for rho in sc.rho_grid:
        alt = generate_alternative(sc, float(rho))
        h1 = map_replicates(lambda i: replicate_statistics(sc, alt, i, cert), sc.N, sc.threads)
        fails_here = sum(1 for r in h1 if not (r.ok and r.converged))
        failures += fails_here
        th = thresholds_for(sc, float(rho))
        for which in sc.which:
            p1, se1 = _rate([decide(which, r.stats, th) for r in h0 if r.ok])
            p2, se2 = _rate([not decide(which, r.stats, th) for r in h1 if r.ok])
            t = th["T1"] if which in ("T1", "MAX") else th[which]
            rows.append(
                RiskRow(
                    which=which,
                    rho=float(rho),
                    threshold=t,
                    type_I=p1,
                    type_II=p2,
                    se_I=se1,
                    se_II=se2,
                    bound=_bound(which, float(rho), t, sc.nm),
                    n_h0=sum(r.ok for r in h0),
                    n_h1=sum(r.ok for r in h1),
                    failures=fails_here,
                )
            )
    table = RiskTable(sc.scenario_id, rows, failures, sc.N * (1 + len(sc.rho_grid)), sc.max_failure_rate)
    if table.failed:
        logger.warning("scenario %s: %s of %s replicates failed", sc.scenario_id, failures, table.replicates)
    return table


# ---------------------------------------------------------------------------
# Test batches
# ---------------------------------------------------------------------------

TEST_HEADER = ("which", "statistic", "threshold", "reject", "seed", "replicate", "scenario_id")


def run_test_batch(sc: Scenario) -> list[tuple]:
    """One row per (replicate, test) on data from the signal section (or H0)."""
    cert = null_certificate(sc.null, sc.dictionary) if "T3" in sc.which else None
    th = thresholds_for(sc)

    def one(i: int) -> ReplicateStats:
        m = sc.signal if sc.signal is not None else null_sample(sc, i)
        return replicate_statistics(sc, m, i, cert)

    rows = []
    for rep in map_replicates(one, sc.N, sc.threads):
        if not rep.ok:
            continue
        for which in sc.which:
            stat = rep.stats["T1"] if which == "MAX" else rep.stats[which]
            t = th["T1"] if which == "MAX" else th[which]
            rows.append((which, stat, t, int(decide(which, rep.stats, th)), sc.base_seed, rep.replicate, sc.scenario_id))
    return rows


# ---------------------------------------------------------------------------
# Detection sweep
# ---------------------------------------------------------------------------

DETECTION_HEADER = (
    "s", "T", "rho_empirical", "rho_min", "rho_dense", "rho_sparse", "binding", "c_min", "c_max", "replicates",
)


@dataclass(frozen=True)
class DetectionRow:
    s: int
    T: int
    rho_empirical: float
    rho_min: float
    rho_dense: float
    rho_sparse: float
    binding: str
    c_min: float
    c_max: float
    replicates: int

    def record(self) -> tuple:
        return (self.s, self.T, self.rho_empirical, self.rho_min, self.rho_dense, self.rho_sparse,
                self.binding, self.c_min, self.c_max, self.replicates)


def detection_direction(dictionary: Dictionary, s: int, seed: int) -> Mixture:
    """s equispaced unit spikes on the torus with a random offset and random signs."""
    rng = replicate_rng(seed, s, stream=2)
    offset = rng.uniform(0.0, 1.0 / s)
    signs = rng.choice([-1.0, 1.0], size=s)
    return Mixture(signs, dictionary.check_locations(offset + np.arange(s) / s))


def run_detection_cell(
    s: int,
    T: int,
    alpha: float,
    replicates: int,
    base_seed: int,
    consts: TestConstants | None = None,
    rho_points: int = 16,
    threads: int = 1,
) -> DetectionRow:
    """Smallest grid rho at which the max test has empirical risk <= alpha, torus grid with sigma_bar = 1."""
    consts = consts or TestConstants()
    d = torus_dictionary(T)
    nm = NoiseModel.grid_white(d.measure, 1.0)
    kappa = default_kappa(nm, float(T), consts.C1)
    solver = SolverConfig(K=max(8, 4 * s), kappa=kappa)
    rm = rho_min(alpha, s, 0, nm, d.width, d.sigma, consts)
    hi = 1.25 * rm.value
    grid = np.geomspace(hi / 16, hi, rho_points)
    direction = detection_direction(d, s, base_seed)
    c_min, c_max = gram_extreme_ratios(direction, d)
    sc = Scenario(
        scenario_id=f"detect-s{s}-T{T}",
        dictionary=d,
        nm=nm,
        null=NullSpec.detection(),
        solver=solver,
        consts=consts,
        generator="amplitude",
        direction=direction,
        rho_grid=grid,
        N=replicates,
        base_seed=base_seed,
        which=("MAX",),
        alpha=alpha,
        threads=threads,
    )
    table = run_risk_curve(sc)
    hits = [r.rho for r in table.rows if r.total <= alpha]
    rho_emp = min(hits) if hits else math.inf
    logger.info("detection s=%s T=%s: rho=%.6g (rho_min %.6g, %s)", s, T, rho_emp, rm.value, rm.binding)
    return DetectionRow(s, T, rho_emp, rm.value, rm.dense, rm.sparse, rm.binding, c_min, c_max, replicates)


def run_detection_sweep(
    s_values: list[int],
    T_values: list[int],
    alpha: float,
    replicates: int,
    base_seed: int = 0,
    consts: TestConstants | None = None,
    rho_points: int = 16,
    threads: int = 1,
) -> list[DetectionRow]:
    return [
        run_detection_cell(s, T, alpha, replicates, base_seed, consts, rho_points, threads)
        for T in T_values
        for s in s_values
    ]


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


def calibration_mixture(dictionary: Dictionary, s: int, amplitude: float = 1.0) -> Mixture:
    """s alternating-sign spikes equispaced inside Theta_T."""
    lo, hi = dictionary.theta_window
    if dictionary.is_torus:
        theta = (np.arange(s) + 0.5) / s
    else:
        theta = lo + (hi - lo) * (np.arange(s) + 1) / (s + 1)
    beta = amplitude * (-1.0) ** np.arange(s)
    return Mixture(beta, dictionary.check_locations(theta))


@dataclass(frozen=True)
class CalibrationRecord:
    C0: float
    C3: float
    kappa: float
    replicates: int
    failures: int
    per_s: dict[int, tuple[float, float]] = field(default_factory=dict)
    C_N: float | None = None
    C_F: float | None = None

    def to_dict(self) -> dict:
        out = {
            "C0": self.C0,
            "C3": self.C3,
            "kappa": self.kappa,
            "replicates": self.replicates,
            "failures": self.failures,
            "per_s": {str(k): list(v) for k, v in self.per_s.items()},
        }
        if self.C_N is not None:
            out["C_N"] = self.C_N
        if self.C_F is not None:
            out["C_F"] = self.C_F
        return out


def calibrate_constants(
    sc: Scenario, s_values: list[int], replicates: int, amplitude: float = 1.0, quantile: float = 99.0
) -> CalibrationRecord:
    """99th percentiles of ||pred error||/(sqrt(s) kappa) and |l1 gap|/(s kappa) over seeded fits."""
    d = sc.dictionary
    kappa = max(sc.solver.kappa, KAPPA_FLOOR)
    per_s: dict[int, tuple[float, float]] = {}
    pe_all: list[float] = []
    l1_all: list[float] = []
    failures = 0
    for s in s_values:
        truth = calibration_mixture(d, s, amplitude)

        def one(i: int, truth=truth, s=s):
            y = d.synthesize(truth.beta, truth.theta) + sample_noise(sc.nm, d.measure, sc.base_seed, i)
            res = fit(y, d, sc.solver)
            pe = prediction_error(res.mixture, truth, d) / (math.sqrt(s) * kappa)
            gap = l1_gap(res.mixture, truth) / (s * kappa)
            return pe, gap, res.converged

        results = map_replicates(one, replicates, sc.threads)
        failures += sum(1 for r in results if not r[2])
        pe = np.array([r[0] for r in results])
        gap = np.array([r[1] for r in results])
        per_s[s] = (float(np.percentile(pe, quantile)), float(np.percentile(gap, quantile)))
        pe_all.extend(pe)
        l1_all.extend(gap)
        logger.info("calibration s=%s: C0=%.6g C3=%.6g", s, *per_s[s])

    c_n = c_f = None
    if sc.null.s0 > 0:
        try:
            rep = verify_certificate(null_certificate(sc.null, d), d, sc.r)
            c_n, c_f = rep.C_N, rep.C_F
        except NumericalViolation as exc:
            logger.warning("null certificate unavailable: %s", exc)
    return CalibrationRecord(
        C0=float(np.percentile(pe_all, quantile)),
        C3=float(np.percentile(l1_all, quantile)),
        kappa=sc.solver.kappa,
        replicates=replicates,
        failures=failures,
        per_s=per_s,
        C_N=c_n if c_n is not None and 0 < c_n < math.inf else None,
        C_F=c_f if c_f is not None and c_f > 0 else None,
    )
