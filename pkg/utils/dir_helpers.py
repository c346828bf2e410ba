"""
Output directory helpers: resolution, scenario hashing and the run manifest.
"""

import hashlib
import json
import os
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

DEFAULT_OUTPUT_DIR = "output"
MANIFEST_NAME = "manifest.json"


def resolve_output_dir(cli_value: str | None) -> Path:
    """CLI value, else OFFGRID_OUTPUT_DIR, else ./output. Created if absent."""
    raw = cli_value or os.environ.get("OFFGRID_OUTPUT_DIR") or DEFAULT_OUTPUT_DIR
    out = Path(raw.strip())
    out.mkdir(parents=True, exist_ok=True)
    return out


def canonical_hash(data: dict) -> str:
    raw = json.dumps(data, separators=(",", ":"), sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(raw).hexdigest()


def scenario_hash(cfg) -> str:
    """sha256 of the validated scenario (all sections, seed included)."""
    return canonical_hash(cfg.model_dump(mode="json"))


def model_hash(cfg) -> str:
    """sha256 of the sections that fix the estimator: dictionary, noise and solver."""
    dump = cfg.model_dump(mode="json")
    return canonical_hash({k: dump[k] for k in ("dictionary", "noise", "solver")})


def code_version() -> str:
    try:
        return metadata.version("offgrid-gof")
    except metadata.PackageNotFoundError:
        from offgrid import __version__

        return __version__


def write_manifest(out_dir: Path | str, cfg, command: str, files: list[str] | None = None) -> Path:
    """manifest.json with scenario hash, seed, code version, command, file list and timestamp."""
    path = Path(out_dir) / MANIFEST_NAME
    payload = {
        "command": command,
        "scenario_id": cfg.scenario_id,
        "scenario_hash": scenario_hash(cfg),
        "seed": cfg.seed,
        "version": code_version(),
        "files": sorted(files or []),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
