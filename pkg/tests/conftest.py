from __future__ import annotations

import pytest

from compresslab.sim.scenarios import DEFAULT_SEED, emit_fixtures
from compresslab.store import load_store, load_store_file


@pytest.fixture(scope="session")
def fixtures_dir(tmp_path_factory):
    """All three simulator scenarios emitted once per test session."""
    root = tmp_path_factory.mktemp("fixtures")
    for scenario in ("user_study", "repair", "bias_audit"):
        emit_fixtures(scenario, DEFAULT_SEED, root / scenario)
    return root


@pytest.fixture(scope="session")
def user_study_store(fixtures_dir):
    return load_store_file(str(fixtures_dir / "user_study" / "experiments.json"))


@pytest.fixture(scope="session")
def repair_store(fixtures_dir):
    return load_store_file(str(fixtures_dir / "repair" / "experiments.json"))


@pytest.fixture(scope="session")
def bias_store(fixtures_dir):
    return load_store_file(str(fixtures_dir / "bias_audit" / "experiments.json"))


def make_doc(models, metrics=None):
    """Experiment document with sensible metric defaults for hand fixtures."""
    if metrics is None:
        metrics = [
            {"name": "accuracy", "unit": "", "objective": "maximize",
             "default_encoding": "color"},
            {"name": "size", "unit": "bytes", "objective": "minimize",
             "default_encoding": "size"},
        ]
    return {"schema_version": 1, "metrics": metrics, "models": models}


def model(mid, parent=None, op=None, params=None, **metrics):
    entry = {
        "id": mid,
        "parent": parent,
        "operation": None if op is None else {"name": op, "parameters": params or {}},
        "metrics": metrics,
        "tags": [],
    }
    return entry


@pytest.fixture
def calibrate_pair_store():
    """prune->quantize next to prune->calibrate->quantize."""
    return load_store(make_doc([
        model("base", accuracy=0.95, size=100.0),
        model("p", "base", "prune", {"sparsity": 0.5}, accuracy=0.9, size=50.0),
        model("pq", "p", "quantize", {"bits": 8}, accuracy=0.88, size=13.0),
        model("pc", "p", "calibrate", {"samples": 128}, accuracy=0.91, size=50.0),
        model("pcq", "pc", "quantize", {"bits": 8}, accuracy=0.9, size=13.0),
    ]))
