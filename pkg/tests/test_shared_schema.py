"""Unit tests for shared store schema and defaults."""

from shared_schema import default_shared_store


def test_default_shared_store_has_all_required_keys():
    """Default shared store must contain all keys used by nodes."""
    shared = default_shared_store()
    required = [
        "command",
        "config_path",
        "overrides",
        "seed",
        "threads",
        "output_dir",
        "config",
        "scenario_hash",
        "model_hash",
        "calibrated",
        "scenario",
        "prox",
        "cells",
        "detection_row",
        "detection_rows",
        "tables",
        "records",
        "plots",
        "summary",
        "written_files",
        "manifest_path",
    ]
    for key in required:
        assert key in shared, f"Missing key: {key}"


def test_default_shared_store_types():
    """Default values must have correct types."""
    shared = default_shared_store()
    assert shared["config_path"] is None
    assert shared["overrides"] == []
    assert shared["seed"] is None
    assert shared["threads"] == 1
    assert shared["output_dir"] == "output"
    assert shared["config"] is None
    assert shared["calibrated"] == {}
    assert shared["cells"] == []
    assert shared["detection_rows"] == []
    assert shared["tables"] == {}
    assert shared["records"] == {}
    assert shared["plots"] == {}
    assert shared["summary"] == {}
    assert shared["written_files"] == []
    assert shared["manifest_path"] is None


def test_default_shared_store_returns_new_copy():
    """Each call returns a new dict; mutating one does not affect another."""
    a = default_shared_store()
    b = default_shared_store()
    a["overrides"].append("seed=1")
    a["tables"]["x.csv"] = ((), [])
    a["summary"]["s"] = 1
    assert b["overrides"] == []
    assert b["tables"] == {}
    assert b["summary"] == {}
