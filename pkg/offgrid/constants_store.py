"""Calibration records keyed by model hash. Persisted to JSON so later runs can reuse them."""

import json
import os
import threading
from pathlib import Path
from typing import Any

# model hash -> calibration record
_store: dict[str, dict[str, Any]] = {}
_lock = threading.Lock()
_loaded_from: Path | None = None


def store_path() -> Path:
    return Path(os.environ.get("OFFGRID_CONSTANTS_FILE", ".cache/constants.json"))


def _persist(path: Path) -> None:
    """Write store to JSON. Caller holds _lock."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as f:
        json.dump(_store, f, indent=2, sort_keys=True)
    tmp.replace(path)


def _load(path: Path) -> None:
    """Load store from JSON once per path. Caller holds _lock."""
    global _loaded_from
    if _loaded_from == path:
        return
    _store.clear()
    _loaded_from = path
    if not path.is_file():
        return
    try:
        with open(path) as f:
            _store.update(json.load(f))
    except (OSError, json.JSONDecodeError):
        pass  # start empty; the next save rewrites the file


def save_record(key: str, record: dict[str, Any]) -> None:
    """Insert or replace the record for key."""
    path = store_path()
    with _lock:
        _load(path)
        _store[key] = dict(record)
        _persist(path)


def get_record(key: str) -> dict[str, Any] | None:
    path = store_path()
    with _lock:
        _load(path)
        rec = _store.get(key)
        return dict(rec) if rec is not None else None


def all_records() -> dict[str, dict[str, Any]]:
    path = store_path()
    with _lock:
        _load(path)
        return {k: dict(v) for k, v in _store.items()}


def reset() -> None:
    """Forget the in-memory copy; the next access reloads from disk."""
    global _loaded_from
    with _lock:
        _store.clear()
        _loaded_from = None
