"""
Sliding greedy solver for the continuous-dictionary Lasso

    min over beta, theta of 1/2 ||y - beta Phi_T(theta)||^2 + kappa ||beta||_1

with locations optimized as continuous variables inside Theta_T.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from offgrid.dictionary import Dictionary
from offgrid.errors import DomainError, InputError
from offgrid.noise import NoiseModel
from offgrid.signal import Mixture

logger = logging.getLogger("offgrid.solver")


@dataclass(frozen=True)
class SolverConfig:
    K: int = 8
    kappa: float = 0.0
    insertion_grid_factor: int = 8
    max_outer_iters: int | None = None
    step_tol: float = 1e-10
    objective_tol: float = 1e-12
    max_local_iters: int = 500
    merge_radius: float = 0.01
    prune_threshold: float = 1e-12
    insert_tol: float = 1e-9
    cd_tol: float = 1e-14
    cd_max_sweeps: int = 10_000

    def __post_init__(self) -> None:
        if self.K < 1:
            raise DomainError(f"K must be at least 1, got {self.K}")
        if self.kappa < 0:
            raise DomainError(f"kappa must be nonnegative, got {self.kappa}")
        if self.insertion_grid_factor < 1:
            raise DomainError("insertion grid needs at least one point per scale")
        for name in ("step_tol", "objective_tol", "merge_radius", "prune_threshold", "insert_tol", "cd_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")

    @property
    def outer_iters(self) -> int:
        return self.max_outer_iters if self.max_outer_iters is not None else 2 * self.K + 4


@dataclass(frozen=True, eq=False)
class FitResult:
    mixture: Mixture
    objective: float
    trace: list[float] = field(default_factory=list)
    converged: bool = True
    iterations: int = 0

    def to_record(self) -> str:
        head = f"converged {int(self.converged)}\nobjective {self.objective:.17g}\niterations {self.iterations}\n"
        return head + self.mixture.to_record()


def default_kappa(nm: NoiseModel, tau: float, c1: float = 2.0) -> float:
    """kappa = c1 * sigma_bar * sqrt(Delta_T log tau)."""
    if not tau > 1:
        raise DomainError(f"tau must exceed 1, got {tau}")
    return c1 * nm.sigma_bar * math.sqrt(nm.delta * math.log(tau))


def soft_threshold(x: float, t: float) -> float:
    return math.copysign(max(abs(x) - t, 0.0), x)


def lasso_cd(G: np.ndarray, b: np.ndarray, kappa: float, beta0: np.ndarray, tol: float = 1e-14, max_sweeps: int = 10_000) -> np.ndarray:
    """Cyclic coordinate descent for 1/2 beta' G beta - b' beta + kappa |beta|_1."""
    beta = np.array(beta0, dtype=float)
    n = beta.size
    for _ in range(max_sweeps):
        biggest = 0.0
        for k in range(n):
            z = b[k] - G[k] @ beta + G[k, k] * beta[k]
            new = soft_threshold(z, kappa) / G[k, k]
            biggest = max(biggest, abs(new - beta[k]))
            beta[k] = new
        if biggest <= tol * (1.0 + np.max(np.abs(beta), initial=0.0)):
            break
    return beta


class _Problem:
    """Objective pieces for one observation."""

    def __init__(self, y: np.ndarray, dictionary: Dictionary, cfg: SolverConfig):
        self.y = y
        self.d = dictionary
        self.cfg = cfg
        self.w = dictionary.measure.weight
        self.grid, self.grid_phi = dictionary.insertion_table(cfg.insertion_grid_factor)

    def synth(self, beta: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if beta.size == 0:
            return np.zeros_like(self.y)
        return beta @ self.d.features(theta)

    def objective(self, beta: np.ndarray, theta: np.ndarray) -> float:
        r = self.y - self.synth(beta, theta)
        return 0.5 * self.w * float(r @ r) + self.cfg.kappa * float(np.abs(beta).sum())

    def best_insertion(self, r: np.ndarray) -> tuple[float, float]:
        corr = np.abs(self.w * (self.grid_phi @ r))
        k = int(np.argmax(corr))
        theta0, best = float(self.grid[k]), float(corr[k])
        step = self.d.sigma / self.cfg.insertion_grid_factor
        lo, hi = theta0 - step, theta0 + step
        if not self.d.is_torus:
            lo, hi = max(lo, self.d.theta_window[0]), min(hi, self.d.theta_window[1])
        res = minimize_scalar(
            lambda t: -abs(self.w * float(self.d.features([t])[0] @ r)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": self.cfg.step_tol * self.d.sigma},
        )
        if -res.fun > best:
            theta0, best = float(self.d.check_locations(res.x)[0]), float(-res.fun)
        return theta0, best

    def solve_beta(self, beta: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if theta.size == 0:
            return beta
        phi = self.d.features(theta)
        G = self.w * phi @ phi.T
        b = self.w * phi @ self.y
        return lasso_cd(G, b, self.cfg.kappa, beta, self.cfg.cd_tol, self.cfg.cd_max_sweeps)

    def refine(self, beta: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Joint (beta, theta) descent with signs frozen; locations scaled by sigma."""
        n = beta.size
        if n == 0:
            return beta, theta
        sigma = self.d.sigma
        signs = np.sign(beta)
        kappa = self.cfg.kappa

        def fun(x):
            b, u = x[:n], x[n:]
            phi, dphi = self.d.normalized(u * sigma, 1)
            r = self.y - b @ phi
            f = 0.5 * self.w * float(r @ r) + kappa * float(signs @ b)
            gb = -self.w * (phi @ r) + kappa * signs
            gu = -sigma * b * self.w * (dphi @ r)
            return f, np.concatenate([gb, gu])

        bounds = [(0.0, None) if sgn > 0 else (None, 0.0) for sgn in signs]
        if self.d.is_torus:
            bounds += [(None, None)] * n
        else:
            lo, hi = self.d.theta_window
            bounds += [(lo / sigma, hi / sigma)] * n
        x0 = np.concatenate([beta, theta / sigma])
        f0, _ = fun(x0)
        res = minimize(
            fun,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": self.cfg.max_local_iters, "ftol": np.finfo(float).eps, "gtol": 1e-12},
        )
        if not np.isfinite(res.fun) or res.fun > f0:
            return beta, theta
        return res.x[:n].copy(), self.d.check_locations(res.x[n:] * sigma)

    def merge(self, beta: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        keep = np.abs(beta) >= self.cfg.prune_threshold
        beta, theta = beta[keep], theta[keep]
        if beta.size < 2:
            return beta, theta
        order = np.argsort(theta)
        beta, theta = list(beta[order]), list(theta[order])
        radius = self.cfg.merge_radius * self.d.sigma
        out_b, out_t = [beta[0]], [theta[0]]
        for b, t in zip(beta[1:], theta[1:]):
            if abs(float(self.d.offset(t, out_t[-1]))) < radius:
                wa, wb = abs(out_b[-1]), abs(b)
                shift = float(self.d.offset(t, out_t[-1]))
                out_t[-1] = float(self.d.check_locations(out_t[-1] + shift * wb / (wa + wb))[0])
                out_b[-1] += b
            else:
                out_b.append(b)
                out_t.append(t)
        if self.d.is_torus and len(out_t) > 1 and abs(float(self.d.offset(out_t[0], out_t[-1]))) < radius:
            wa, wb = abs(out_b[-1]), abs(out_b[0])
            shift = float(self.d.offset(out_t[0], out_t[-1]))
            out_t[-1] = float(self.d.check_locations(out_t[-1] + shift * wb / (wa + wb))[0])
            out_b[-1] += out_b[0]
            out_b, out_t = out_b[1:], out_t[1:]
        b_arr, t_arr = np.asarray(out_b), np.asarray(out_t)
        nz = b_arr != 0
        return b_arr[nz], t_arr[nz]


def fit(y: np.ndarray, dictionary: Dictionary, cfg: SolverConfig) -> FitResult:
    """Greedy insertion, exact amplitude updates and joint sliding of locations."""
    y = dictionary.measure.check(y)
    if not np.all(np.isfinite(y)):
        raise InputError("observation contains non-finite entries")
    prob = _Problem(y, dictionary, cfg)
    beta = np.zeros(0)
    theta = np.zeros(0)
    current = prob.objective(beta, theta)
    trace = [current]
    prev_beta, prev_theta = beta, theta
    converged = False
    capped = False
    iterations = 0
    threshold = cfg.kappa * (1.0 + cfg.insert_tol)

    for iterations in range(1, cfg.outer_iters + 1):
        r = y - prob.synth(beta, theta)
        cand, value = prob.best_insertion(r)
        inserted = False
        if value > threshold:
            if theta.size < cfg.K:
                beta = np.append(beta, 0.0)
                theta = np.append(theta, cand)
                inserted = True
            else:
                capped = True
        if theta.size == 0:
            converged = True
            break

        beta = prob.solve_beta(beta, theta)
        nz = beta != 0
        beta, theta = beta[nz], theta[nz]
        beta, theta = prob.refine(beta, theta)
        beta = prob.solve_beta(beta, theta)
        nz = beta != 0
        beta, theta = beta[nz], theta[nz]
        value_now = prob.objective(beta, theta)

        mb, mt = prob.merge(beta, theta)
        if mb.size != beta.size:
            mb = prob.solve_beta(mb, mt)
            nz = mb != 0
            mb, mt = mb[nz], mt[nz]
            merged_value = prob.objective(mb, mt)
            if merged_value <= value_now:
                beta, theta, value_now = mb, mt, merged_value

        if value_now > current:
            if value_now - current > cfg.objective_tol * max(1.0, abs(current)):
                logger.warning(
                    "iteration %s raised the objective from %.12g to %.12g; keeping the previous iterate",
                    iterations,
                    current,
                    value_now,
                )
                beta, theta = prev_beta, prev_theta
                break
            # rounding-level rise: the previous iterate is as good
            beta, theta, value_now = prev_beta, prev_theta, current
        change = current - value_now
        current = value_now
        prev_beta, prev_theta = beta, theta
        trace.append(current)
        logger.debug("iteration %s: s=%s objective=%.12g", iterations, beta.size, current)
        if not inserted and change <= cfg.objective_tol * max(1.0, abs(current)):
            converged = not capped
            break

    if not converged:
        logger.warning("fit stopped after %s iterations without convergence (s=%s)", iterations, beta.size)
    order = np.argsort(theta)
    mixture = Mixture(beta[order], theta[order])
    return FitResult(
        mixture=mixture,
        objective=prob.objective(mixture.beta, mixture.theta),
        trace=trace,
        converged=converged,
        iterations=iterations,
    )


@dataclass(frozen=True)
class StationarityReport:
    sup_correlation: float
    coefficient_gap: float
    location_gap: float
    y_norm: float
    kappa: float

    @property
    def ok(self) -> bool:
        return (
            self.sup_correlation <= self.kappa * (1 + 1e-6) + 1e-12
            and self.coefficient_gap <= 1e-6
            and self.location_gap <= 1e-6 * (1 + self.y_norm)
        )


def stationarity_report(y: np.ndarray, dictionary: Dictionary, result: FitResult, kappa: float, insertion_grid_factor: int = 8) -> StationarityReport:
    """First-order optimality gaps of a fit."""
    m = result.mixture
    w = dictionary.measure.weight
    r = y - dictionary.synthesize(m.beta, m.theta)
    _, grid_phi = dictionary.insertion_table(insertion_grid_factor)
    sup_corr = float(np.max(np.abs(w * (grid_phi @ r))))
    coef_gap = 0.0
    loc_gap = 0.0
    if m.s:
        phi, dphi = dictionary.normalized(m.theta, 1)
        coef_gap = float(np.max(np.abs(w * (phi @ r) - kappa * np.sign(m.beta))))
        loc_gap = float(np.max(np.abs(w * (dphi @ r)) * np.abs(m.beta)))
    return StationarityReport(sup_corr, coef_gap, loc_gap, dictionary.norm(y), kappa)


def prediction_error(estimate: Mixture, truth: Mixture, dictionary: Dictionary) -> float:
    """||beta_hat Phi(theta_hat) - beta* Phi(theta*)||."""
    diff = dictionary.synthesize(estimate.beta, estimate.theta) - dictionary.synthesize(truth.beta, truth.theta)
    return dictionary.norm(diff)


def l1_gap(estimate: Mixture, truth: Mixture) -> float:
    return abs(estimate.l1() - truth.l1())
