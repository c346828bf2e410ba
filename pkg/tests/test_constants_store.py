"""Unit tests for offgrid.constants_store."""

import json

import pytest

from offgrid import constants_store


@pytest.fixture
def store_file(tmp_path, monkeypatch):
    path = tmp_path / "cache" / "constants.json"
    monkeypatch.setenv("OFFGRID_CONSTANTS_FILE", str(path))
    constants_store.reset()
    yield path
    constants_store.reset()


def test_get_missing_record(store_file):
    """Unknown hashes return None without creating the file."""
    assert constants_store.get_record("abc") is None
    assert not store_file.exists()


def test_save_and_reload(store_file):
    """Saved records persist to JSON and survive a reset."""
    constants_store.save_record("h1", {"C0": 1.5, "C3": 0.7})
    assert json.loads(store_file.read_text())["h1"]["C0"] == 1.5
    constants_store.reset()
    assert constants_store.get_record("h1") == {"C0": 1.5, "C3": 0.7}
    assert set(constants_store.all_records()) == {"h1"}


def test_save_replaces_record(store_file):
    """A second save under the same hash replaces the first."""
    constants_store.save_record("h1", {"C0": 1.0})
    constants_store.save_record("h1", {"C0": 2.0})
    assert constants_store.get_record("h1") == {"C0": 2.0}


def test_returned_records_are_copies(store_file):
    """Mutating a returned record does not touch the store."""
    constants_store.save_record("h1", {"C0": 1.0})
    rec = constants_store.get_record("h1")
    rec["C0"] = 99.0
    assert constants_store.get_record("h1")["C0"] == 1.0


def test_corrupt_file_starts_empty(store_file):
    """Unreadable JSON is treated as an empty store."""
    store_file.parent.mkdir(parents=True)
    store_file.write_text("{not json")
    assert constants_store.all_records() == {}
    constants_store.save_record("h2", {"C3": 3.0})
    assert json.loads(store_file.read_text()) == {"h2": {"C3": 3.0}}
