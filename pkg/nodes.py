"""
PocketFlow nodes for the offgrid pipelines.
"""

import logging
import math
from functools import partial
from pathlib import Path

import numpy as np
from pocketflow import Node

from offgrid import constants_store
from offgrid.certificate import build_certificate, dual_pairing, verify_certificate
from offgrid.diagnostics import (
    check_assumption,
    compute_VT,
    lowpass_bounds,
    shrinkage_gamma,
)
from offgrid.errors import ConfigError
from offgrid.harness import (
    DETECTION_HEADER,
    RISK_HEADER,
    TEST_HEADER,
    Scenario,
    calibrate_constants,
    run_detection_cell,
    run_risk_curve,
    run_test_batch,
)
from offgrid.hypotest import rho1, rho2, rho3, rho_min
from offgrid.presets import build_constants, build_prox
from offgrid.proxkernel import constants_table, separation_requirement
from offgrid.schemas import load_scenario
from offgrid.signal import Mixture, observe
from offgrid.solver import fit, l1_gap, prediction_error, stationarity_report
from utils import plot_helpers
from utils.csv_helpers import write_csv, write_records
from utils.dir_helpers import model_hash, scenario_hash, write_manifest

logger = logging.getLogger("offgrid")

NAME_VALUE = ("quantity", "value")


def cell_model_hash(cfg, T: int) -> str:
    """Model hash of the torus model a detection cell runs: dirichlet grid of size T, sigma_bar = 1."""
    cell = cfg.model_copy(
        update={
            "dictionary": cfg.dictionary.model_copy(update={"preset": "dirichlet", "measure": "grid", "T": T}),
            "noise": cfg.noise.model_copy(update={"sigma_bar": 1.0}),
        }
    )
    return model_hash(cell)


def _truth(sc: Scenario) -> Mixture:
    """Signal section if given, else the null mixture."""
    return sc.signal if sc.signal is not None else sc.null.mixture


def _sample_axis(sc: Scenario) -> np.ndarray:
    mu = sc.dictionary.measure
    return mu.points if mu.points is not None else np.arange(mu.size, dtype=float)


class LoadScenario(Node):
    """
    Read the YAML scenario, apply --set overrides and --seed, validate.
    post: set shared["config"], shared["scenario_hash"], shared["model_hash"].
    """

    def prep(self, shared: dict) -> dict:
        overrides = list(shared.get("overrides") or [])
        if shared.get("seed") is not None:
            overrides.append(f"seed={int(shared['seed'])}")
        return {"path": shared.get("config_path"), "overrides": overrides}

    def exec(self, prep_res: dict):
        return load_scenario(prep_res["path"], prep_res["overrides"])

    def post(self, shared: dict, prep_res: dict, exec_res) -> str:
        shared["config"] = exec_res
        shared["scenario_hash"] = scenario_hash(exec_res)
        shared["model_hash"] = model_hash(exec_res)
        shared["threads"] = shared.get("threads") or exec_res.mc.threads or 1
        logger.info("LoadScenario: %s (seed=%s, hash=%s)", exec_res.scenario_id, exec_res.seed, shared["scenario_hash"][:12])
        return "default"


class BuildModel(Node):
    """
    Build the dictionary, noise model, null, solver settings and test constants.
    Calibrated constants come from the store under the model hash unless constants.use_store is off.
    """

    def prep(self, shared: dict) -> dict:
        cfg = shared["config"]
        calibrated = {}
        if cfg.constants.use_store and shared.get("model_hash"):
            calibrated = constants_store.get_record(shared["model_hash"]) or {}
            if calibrated:
                logger.info("BuildModel: using calibrated constants %s", {k: calibrated[k] for k in ("C0", "C3") if k in calibrated})
        return {"config": cfg, "calibrated": calibrated, "threads": int(shared.get("threads") or 1)}

    def exec(self, prep_res: dict) -> tuple:
        cfg = prep_res["config"]
        sc = Scenario.from_config(cfg, prep_res["calibrated"], prep_res["threads"])
        return sc, build_prox(cfg.dictionary)

    def post(self, shared: dict, prep_res: dict, exec_res: tuple) -> str:
        shared["scenario"], shared["prox"] = exec_res
        shared["calibrated"] = prep_res["calibrated"]
        sc = shared["scenario"]
        logger.info("BuildModel: T=%s sigma=%.6g kappa=%.6g", sc.dictionary.measure.T, sc.dictionary.sigma, sc.solver.kappa)
        return "default"


class Simulate(Node):
    """Draw replicate 0 of the observation for the signal (or null) mixture."""

    def prep(self, shared: dict) -> dict:
        return {"scenario": shared["scenario"]}

    def exec(self, prep_res: dict) -> dict:
        sc = prep_res["scenario"]
        truth = _truth(sc)
        d = sc.dictionary
        y = observe(truth, d, sc.nm, sc.base_seed, 0)
        clean = d.synthesize(truth.beta, truth.theta)
        return {"truth": truth, "y": y, "clean": clean, "axis": _sample_axis(sc)}

    def post(self, shared: dict, prep_res: dict, exec_res: dict) -> str:
        axis, y, clean, truth = exec_res["axis"], exec_res["y"], exec_res["clean"], exec_res["truth"]
        shared["tables"]["observation.csv"] = (
            ("index", "t", "y", "clean"),
            [(k, axis[k], y[k], clean[k]) for k in range(y.size)],
        )
        shared["records"]["truth.txt"] = [truth.to_record()]
        shared["plots"]["observation.svg"] = partial(
            plot_helpers.plot_mixture, t=axis, y=y, fitted=clean, spikes=list(zip(truth.beta, truth.theta))
        )
        shared["summary"]["s"] = truth.s
        logger.info("Simulate: %s samples, s=%s", y.size, truth.s)
        return "default"


class Estimate(Node):
    """Fit the off-the-grid Lasso to replicate 0 and report stationarity and error against the truth."""

    def prep(self, shared: dict) -> dict:
        return {"scenario": shared["scenario"], "grid_factor": shared["config"].solver.insertion_grid_factor}

    def exec(self, prep_res: dict) -> dict:
        sc = prep_res["scenario"]
        d = sc.dictionary
        truth = _truth(sc)
        y = observe(truth, d, sc.nm, sc.base_seed, 0)
        res = fit(y, d, sc.solver)
        stat = stationarity_report(y, d, res, sc.solver.kappa, prep_res["grid_factor"])
        return {"y": y, "truth": truth, "result": res, "stationarity": stat, "axis": _sample_axis(sc), "dictionary": d}

    def post(self, shared: dict, prep_res: dict, exec_res: dict) -> str:
        res, stat, truth, d = exec_res["result"], exec_res["stationarity"], exec_res["truth"], exec_res["dictionary"]
        m = res.mixture
        if not res.converged:
            logger.warning("Estimate: solver stopped after %s iterations without converging", res.iterations)
        shared["tables"]["estimate.csv"] = (("k", "beta", "theta"), [(k, b, t) for k, (b, t) in enumerate(zip(m.beta, m.theta))])
        shared["tables"]["fit_summary.csv"] = (
            NAME_VALUE,
            [
                ("objective", res.objective),
                ("converged", float(res.converged)),
                ("iterations", float(res.iterations)),
                ("s_hat", float(m.s)),
                ("kappa", stat.kappa),
                ("sup_correlation", stat.sup_correlation),
                ("coefficient_gap", stat.coefficient_gap),
                ("location_gap", stat.location_gap),
                ("prediction_error", prediction_error(m, truth, d)),
                ("l1_gap", l1_gap(m, truth)),
            ],
        )
        shared["records"]["fit.txt"] = [res.to_record()]
        shared["records"]["truth.txt"] = [truth.to_record()]
        shared["plots"]["estimate.svg"] = partial(
            plot_helpers.plot_mixture,
            t=exec_res["axis"],
            y=exec_res["y"],
            fitted=d.synthesize(m.beta, m.theta),
            spikes=list(zip(m.beta, m.theta)),
        )
        shared["summary"].update({"s_hat": m.s, "objective": res.objective, "converged": res.converged})
        logger.info("Estimate: s_hat=%s objective=%.10g stationary=%s", m.s, res.objective, stat.ok)
        return "default"


class Certify(Node):
    """Build the interpolating certificate for certificate.anchors (or the signed null) and scan it."""

    def prep(self, shared: dict) -> dict:
        cfg = shared["config"]
        sc = shared["scenario"]
        anchors, signs = cfg.certificate.anchors, cfg.certificate.signs
        if not anchors:
            if sc.null.signs is None:
                raise ConfigError("certificate.anchors is empty and null.signs is not set")
            anchors, signs = list(sc.null.anchors), list(sc.null.v)
        return {
            "dictionary": sc.dictionary,
            "anchors": anchors,
            "signs": signs,
            "r": cfg.certificate.r,
            "grid_step": cfg.certificate.grid_step,
            "threads": int(shared.get("threads") or 1),
        }

    def exec(self, prep_res: dict) -> tuple:
        d = prep_res["dictionary"]
        c = build_certificate(d, prep_res["anchors"], prep_res["signs"])
        report = verify_certificate(c, d, prep_res["r"], prep_res["grid_step"], prep_res["threads"])
        pairing = dual_pairing(c, Mixture(c.signs, c.anchors), d)
        return c, report, pairing

    def post(self, shared: dict, prep_res: dict, exec_res: tuple) -> str:
        c, report, pairing = exec_res
        d = prep_res["dictionary"]
        rows = report.rows()
        rows.append(("norm_p_over_sqrt_s", math.nan, d.norm(c.rep) / math.sqrt(c.s)))
        rows.append(("pairing_minus_l1", math.nan, pairing - float(c.s)))
        shared["tables"]["certificate.csv"] = (("quantity", "theta", "value"), rows)
        shared["tables"]["certificate_profile.csv"] = (("theta", "eta"), list(zip(report.grid, report.profile)))
        shared["plots"]["certificate.svg"] = partial(
            plot_helpers.plot_certificate, grid=report.grid, profile=report.profile, anchors=c.anchors
        )
        shared["summary"].update({"C_N": report.C_N, "C_F": report.C_F, "passed": report.passed})
        if not report.passed:
            logger.warning("Certify: certificate fails its bounds (C_N=%.6g, C_F=%.6g)", report.C_N, report.C_F)
        logger.info("Certify: s=%s residual=%.3g", c.s, report.max_residual)
        return "default"


class RunTest(Node):
    """Evaluate the configured tests on mc.replicates seeded observations."""

    def prep(self, shared: dict) -> dict:
        return {"scenario": shared["scenario"]}

    def exec(self, prep_res: dict) -> list[tuple]:
        return run_test_batch(prep_res["scenario"])

    def post(self, shared: dict, prep_res: dict, exec_res: list[tuple]) -> str:
        shared["tables"]["tests.csv"] = (TEST_HEADER, exec_res)
        for which in prep_res["scenario"].which:
            flags = [row[3] for row in exec_res if row[0] == which]
            rate = sum(flags) / len(flags) if flags else math.nan
            shared["summary"][f"reject_rate_{which}"] = rate
            logger.info("RunTest: %s rejects %s of %s", which, sum(flags), len(flags))
        return "default"


class Diagnose(Node):
    """Kernel approximation constants, the assumption verdict and closed-form references."""

    def prep(self, shared: dict) -> dict:
        cfg = shared["config"]
        return {
            "config": cfg,
            "dictionary": shared["scenario"].dictionary,
            "prox": shared["prox"],
            "threads": int(shared.get("threads") or 1),
        }

    def exec(self, prep_res: dict) -> tuple:
        cfg, d, pf = prep_res["config"], prep_res["dictionary"], prep_res["prox"]
        dg = cfg.diagnostics
        report = compute_VT(d, pf, dg.grid_step, prep_res["threads"])
        verdict = check_assumption(
            d, pf, dg.eta, dg.r, dg.s, Q=dg.Q or None, grid_step=dg.grid_step, report=report, threads=prep_res["threads"]
        )
        refs: list[tuple[str, float]] = []
        if cfg.dictionary.preset == "dirichlet":
            lb = lowpass_bounds(d.family.n_freq)
            refs += [("C_T_closed_form", lb.C_T), ("C_T_gap_bound", lb.C_T_gap_bound)]
        else:
            lo, hi = d.measure.points[0], d.measure.points[-1] + d.measure.weight
            b = 0.5 * (hi - lo)
            refs.append(("gamma_T", shrinkage_gamma(d.measure.T, b, d.sigma, cfg.dictionary.xi)))
        return report, verdict, refs

    def post(self, shared: dict, prep_res: dict, exec_res: tuple) -> str:
        report, verdict, refs = exec_res
        rows = report.rows() + refs + verdict.rows()
        shared["tables"]["diagnostics.csv"] = (NAME_VALUE, rows)
        shared["tables"]["kernel_difference.csv"] = (("offset", "max_abs_difference"), list(zip(report.offsets, report.profile)))
        shared["plots"]["kernel_difference.svg"] = partial(
            plot_helpers.plot_kernel_difference, offsets=report.offsets, profile=report.profile, V_T=report.V_T
        )
        for note in verdict.notes:
            logger.warning("Diagnose: %s", note)
        shared["summary"].update({"C_T": report.C_T, "V_T": report.V_T, "assumption": verdict.passed})
        return "default"


class PlanSweep(Node):
    """Route the sweep verb: risk curves on the scenario, or the (s, T) detection grid."""

    def prep(self, shared: dict) -> dict:
        return {"config": shared["config"]}

    def exec(self, prep_res: dict) -> list[dict]:
        mc = prep_res["config"].mc
        if mc.sweep != "detection":
            return []
        return [
            {"cell_index": k, "s": s, "T": T}
            for k, (T, s) in enumerate((T, s) for T in mc.T_values for s in mc.s_values)
        ]

    def post(self, shared: dict, prep_res: dict, exec_res: list[dict]) -> str:
        shared["cells"] = exec_res
        action = prep_res["config"].mc.sweep
        logger.info("PlanSweep: %s sweep%s", action, f" over {len(exec_res)} cells" if exec_res else "")
        return action


class Sweep(Node):
    """Risk curves over alt.rho_grid for every test in test.which."""

    def prep(self, shared: dict) -> dict:
        return {"scenario": shared["scenario"]}

    def exec(self, prep_res: dict):
        return run_risk_curve(prep_res["scenario"])

    def post(self, shared: dict, prep_res: dict, exec_res) -> str:
        shared["tables"]["risk.csv"] = (RISK_HEADER, exec_res.records())
        shared["plots"]["risk.svg"] = partial(plot_helpers.plot_risk_curves, rows=exec_res.rows, title=exec_res.scenario_id)
        shared["summary"].update({"failures": exec_res.failures, "replicates": exec_res.replicates})
        if exec_res.failed:
            logger.warning("Sweep: failure rate above %s, results flagged", exec_res.max_failure_rate)
        shared["summary"]["failed"] = exec_res.failed
        return "default"


class DetectionCell(Node):
    """One (s, T) cell of the detection sweep; params carry s, T and cell_index."""

    def prep(self, shared: dict) -> dict:
        cfg = shared["config"]
        T = int(self.params["T"])
        calibrated = {}
        if cfg.constants.use_store:
            calibrated = constants_store.get_record(cell_model_hash(cfg, T)) or {}
        return {
            "s": int(self.params["s"]),
            "T": T,
            "alpha": cfg.test.alpha,
            "replicates": cfg.mc.replicates,
            "seed": cfg.seed,
            "consts": build_constants(cfg.constants, calibrated),
            "rho_points": cfg.mc.rho_points,
        }

    def exec(self, prep_res: dict):
        return run_detection_cell(
            prep_res["s"],
            prep_res["T"],
            prep_res["alpha"],
            prep_res["replicates"],
            prep_res["seed"],
            prep_res["consts"],
            prep_res["rho_points"],
        )

    def post(self, shared: dict, prep_res: dict, exec_res) -> str:
        shared["detection_row"] = exec_res
        return "default"


class CollectDetection(Node):
    """Detection rows to CSV and plot."""

    def prep(self, shared: dict) -> list:
        return list(shared.get("detection_rows") or [])

    def exec(self, prep_res: list) -> list[tuple]:
        return [row.record() for row in prep_res]

    def post(self, shared: dict, prep_res: list, exec_res: list[tuple]) -> str:
        shared["tables"]["detection.csv"] = (DETECTION_HEADER, exec_res)
        shared["plots"]["detection.svg"] = partial(plot_helpers.plot_detection, rows=prep_res)
        shared["summary"]["cells"] = len(exec_res)
        return "default"


class Calibrate(Node):
    """Estimate C0, C3 (and C_N, C_F for signed nulls) and store them under the model hash."""

    def prep(self, shared: dict) -> dict:
        cfg = shared["config"]
        return {
            "scenario": shared["scenario"],
            "s_values": list(cfg.mc.s_values),
            "replicates": cfg.mc.calibration_replicates,
            "model_hash": shared["model_hash"],
            "scenario_hash": shared["scenario_hash"],
        }

    def exec(self, prep_res: dict):
        return calibrate_constants(prep_res["scenario"], prep_res["s_values"], prep_res["replicates"])

    def post(self, shared: dict, prep_res: dict, exec_res) -> str:
        record = exec_res.to_dict()
        record["scenario_hash"] = prep_res["scenario_hash"]
        constants_store.save_record(prep_res["model_hash"], record)
        rows = [(s, c0, c3) for s, (c0, c3) in sorted(exec_res.per_s.items())]
        shared["tables"]["calibration.csv"] = (("s", "C0", "C3"), rows)
        shared["tables"]["calibrated_constants.csv"] = (
            NAME_VALUE,
            [(k, v) for k, v in sorted(record.items()) if isinstance(v, (int, float))],
        )
        shared["summary"].update({"C0": exec_res.C0, "C3": exec_res.C3, "model_hash": prep_res["model_hash"]})
        logger.info("Calibrate: C0=%.6g C3=%.6g stored under %s", exec_res.C0, exec_res.C3, prep_res["model_hash"][:12])
        return "default"


class DumpConstants(Node):
    """Limit-kernel constants and the separation rates of the configured scenario."""

    def prep(self, shared: dict) -> dict:
        return {"config": shared["config"], "scenario": shared["scenario"], "prox": shared["prox"]}

    def exec(self, prep_res: dict) -> tuple:
        cfg, sc, pf = prep_res["config"], prep_res["scenario"], prep_res["prox"]
        dg = cfg.diagnostics
        table = constants_table(pf, dg.eta, dg.r, dg.s)
        table.append(("separation_in_locations", separation_requirement(pf, dg.eta, dg.r, dg.s) * sc.dictionary.sigma))
        d, nm, alpha, s0, kappa = sc.dictionary, sc.nm, sc.alpha, sc.null.s0, sc.solver.kappa
        s = max(dg.s, s0)
        rm = rho_min(alpha, s, s0, nm, d.width, d.sigma, sc.consts)
        r2 = rho2(alpha, s, s0, kappa, sc.consts, nm, d.width, d.sigma)
        r3 = rho3(alpha, s, s0, kappa, sc.consts, nm, d.width, d.sigma)
        rates = [
            ("rho1", rho1(alpha, nm), math.nan, math.nan),
            ("rho2", r2.rho, r2.t, r2.closed_form),
            ("rho3", r3.rho, r3.t, r3.closed_form),
            ("rho_min", rm.value, math.nan, math.nan),
            ("rho_min_dense", rm.dense, math.nan, math.nan),
            ("rho_min_sparse", rm.sparse, math.nan, math.nan),
        ]
        return table, rates, rm.binding

    def post(self, shared: dict, prep_res: dict, exec_res: tuple) -> str:
        table, rates, binding = exec_res
        shared["tables"]["constants.csv"] = (NAME_VALUE, table)
        shared["tables"]["rates.csv"] = (("name", "rho", "threshold", "closed_form"), rates)
        shared["summary"]["binding"] = binding
        return "default"


class WriteOutputs(Node):
    """
    Write tables, records, plots and manifest.json to output_dir.
    post: set shared["written_files"], shared["manifest_path"].
    """

    def prep(self, shared: dict) -> dict:
        return {
            "output_dir": Path(shared.get("output_dir") or "output"),
            "tables": dict(shared.get("tables") or {}),
            "records": dict(shared.get("records") or {}),
            "plots": dict(shared.get("plots") or {}),
            "config": shared["config"],
            "command": shared.get("command") or "",
        }

    def exec(self, prep_res: dict) -> tuple[list[str], str]:
        out = prep_res["output_dir"]
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, (header, rows) in sorted(prep_res["tables"].items()):
            write_csv(out / name, header, rows)
            written.append(name)
        for name, recs in sorted(prep_res["records"].items()):
            write_records(out / name, recs)
            written.append(name)
        for name, draw in sorted(prep_res["plots"].items()):
            draw(out / name)
            written.append(name)
        manifest = write_manifest(out, prep_res["config"], prep_res["command"], written)
        return written, str(manifest)

    def post(self, shared: dict, prep_res: dict, exec_res: tuple[list[str], str]) -> str:
        shared["written_files"], shared["manifest_path"] = exec_res
        logger.info("WriteOutputs: %s files in %s", len(exec_res[0]), prep_res["output_dir"])
        return "default"
