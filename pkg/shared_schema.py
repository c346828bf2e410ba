"""
Shared store schema and defaults for the offgrid pipelines.

Inputs (set by CLI/main):
- command: str - One of simulate, estimate, certify, test, diagnose, sweep, calibrate, constants.
- config_path: Optional[str] - YAML scenario file; None runs on defaults.
- overrides: list[str] - Dotted-key overrides ("a.b=value") applied before validation.
- seed: Optional[int] - Replaces the scenario seed when set.
- threads: int - Worker threads for replicate and cell pools (default 1).
- output_dir: str - Directory for CSV, records, plots and manifest.json.

Intermediate (written by nodes):
- config: Optional[ScenarioConfig] - Output of LoadScenario.
- scenario_hash: Optional[str] - sha256 of the validated scenario.
- model_hash: Optional[str] - sha256 of the dictionary, noise and solver sections; keys the calibration store.
- calibrated: dict - Calibration record loaded for model_hash (empty when absent or disabled).
- scenario: Optional[harness.Scenario] - Output of BuildModel.
- prox: Optional[ProxFunction] - Limit kernel of the dictionary preset.
- cells: list[dict] - Detection-sweep cells {"cell_index", "s", "T"}; output of PlanSweep.
- detection_row: Optional[DetectionRow] - Per-cell result inside ParallelCellFlow.
- detection_rows: list[DetectionRow] - Cell results in index order.

Outputs (written by nodes, rendered by WriteOutputs):
- tables: dict - CSV file name -> (header tuple, list of row tuples).
- records: dict - Record file name -> list of text records.
- plots: dict - SVG file name -> callable taking the output path.
- summary: dict - Short name -> value, printed by main.
- written_files: list[str] - Files written by WriteOutputs, relative to output_dir.
- manifest_path: Optional[str] - Path of manifest.json.
"""


def default_shared_store() -> dict:
    """Return a new shared store dict with default keys and values."""
    return {
        "command": None,
        "config_path": None,
        "overrides": [],
        "seed": None,
        "threads": 1,
        "output_dir": "output",
        "config": None,
        "scenario_hash": None,
        "model_hash": None,
        "calibrated": {},
        "scenario": None,
        "prox": None,
        "cells": [],
        "detection_row": None,
        "detection_rows": [],
        "tables": {},
        "records": {},
        "plots": {},
        "summary": {},
        "written_files": [],
        "manifest_path": None,
    }
