"""
PocketFlow flows for the offgrid CLI, one per verb.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

from pocketflow import Flow

from shared_schema import default_shared_store

from nodes import (
    BuildModel,
    Calibrate,
    Certify,
    CollectDetection,
    DetectionCell,
    Diagnose,
    DumpConstants,
    Estimate,
    LoadScenario,
    PlanSweep,
    RunTest,
    Simulate,
    Sweep,
    WriteOutputs,
)

logger = logging.getLogger("offgrid")

# Keys to copy from shared into each parallel run's isolated store
GLOBAL_CONFIG_KEYS = [
    "config",
    "scenario_hash",
    "model_hash",
    "output_dir",
]


def _model_flow(work) -> Flow:
    """LoadScenario -> BuildModel -> work -> WriteOutputs."""
    load = LoadScenario()
    build = BuildModel()
    write = WriteOutputs()
    load >> build >> work >> write
    return Flow(start=load)


def create_simulate_flow() -> Flow:
    return _model_flow(Simulate())


def create_estimate_flow() -> Flow:
    return _model_flow(Estimate())


def create_certify_flow() -> Flow:
    return _model_flow(Certify())


def create_test_flow() -> Flow:
    return _model_flow(RunTest())


def create_diagnose_flow() -> Flow:
    return _model_flow(Diagnose())


def create_calibrate_flow() -> Flow:
    return _model_flow(Calibrate())


def create_constants_flow() -> Flow:
    return _model_flow(DumpConstants())


class ParallelCellFlow(Flow):
    """
    Runs the inner flow once per detection cell in a ThreadPoolExecutor with isolated
    shared stores. Rows are gathered in cell order; the first cell error is re-raised
    after every cell has finished.
    """

    def _run(self, shared):
        cells = shared.get("cells", [])
        max_workers = max(1, int(shared.get("threads") or 1))
        inner_flow = self.start_node
        global_cfg = {k: shared[k] for k in GLOBAL_CONFIG_KEYS if k in shared}

        def run_one(bp):
            iso = default_shared_store()
            iso.update(global_cfg)
            iso.update(bp)
            inner_flow._orch(iso, {**self.params, **bp})
            return iso.get("detection_row")

        rows = [None] * len(cells)
        errors = []
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(run_one, bp) for bp in cells]
            for k, fut in enumerate(futures):
                try:
                    rows[k] = fut.result()
                except Exception as e:
                    logger.warning("Cell s=%s T=%s failed: %s", cells[k].get("s"), cells[k].get("T"), e)
                    errors.append(e)
        if errors:
            raise errors[0]
        shared["detection_rows"] = [r for r in rows if r is not None]
        return "default"


def create_sweep_flow() -> Flow:
    """
    LoadScenario -> PlanSweep, then either
      "risk":      BuildModel -> Sweep -> WriteOutputs
      "detection": ParallelCellFlow(DetectionCell) -> CollectDetection -> WriteOutputs
    """
    load = LoadScenario()
    plan = PlanSweep()
    build = BuildModel()
    sweep = Sweep()
    cells = ParallelCellFlow(start=Flow(start=DetectionCell()))
    collect = CollectDetection()
    write = WriteOutputs()
    load >> plan
    plan - "risk" >> build >> sweep >> write
    plan - "detection" >> cells >> collect >> write
    return Flow(start=load)


FLOW_FACTORIES = {
    "simulate": create_simulate_flow,
    "estimate": create_estimate_flow,
    "certify": create_certify_flow,
    "test": create_test_flow,
    "diagnose": create_diagnose_flow,
    "sweep": create_sweep_flow,
    "calibrate": create_calibrate_flow,
    "constants": create_constants_flow,
}


def create_flow(command: str) -> Flow:
    try:
        return FLOW_FACTORIES[command]()
    except KeyError:
        raise ValueError(f"unknown command {command!r}") from None
