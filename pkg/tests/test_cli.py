from __future__ import annotations

import hashlib
import json

import pytest

from compresslab.cli import main


@pytest.fixture()
def experiments_path(fixtures_dir):
    return str(fixtures_dir / "user_study" / "experiments.json")


class TestValidate:
    def test_valid_fixture_exits_zero(self, experiments_path, capsys):
        assert main(["validate", experiments_path]) == 0
        assert "20 models" in capsys.readouterr().out

    def test_cycle_exits_one_with_code(self, tmp_path, capsys):
        doc = {
            "schema_version": 1,
            "metrics": [],
            "models": [
                {"id": "a", "parent": "b",
                 "operation": {"name": "prune", "parameters": {}}, "metrics": {}},
                {"id": "b", "parent": "a",
                 "operation": {"name": "prune", "parameters": {}}, "metrics": {}},
            ],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        assert main(["validate", str(path)]) == 1
        assert "CycleDetected" in capsys.readouterr().err


class TestLayout:
    def test_prints_layout_json(self, experiments_path, capsys):
        assert main(["layout", experiments_path, "--mode", "by_operation"]) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["mode"] == "by_operation"
        assert len(body["nodes"]) == 20


class TestCompare:
    def test_calibrate_pair_json_mentions_presence(self, tmp_path, capsys):
        doc = {
            "schema_version": 1,
            "metrics": [{"name": "accuracy", "unit": "",
                         "objective": "maximize", "default_encoding": None}],
            "models": [
                {"id": "base", "parent": None, "operation": None,
                 "metrics": {"accuracy": 0.9}},
                {"id": "p", "parent": "base",
                 "operation": {"name": "prune", "parameters": {"sparsity": 0.5}},
                 "metrics": {"accuracy": 0.9}},
                {"id": "pq", "parent": "p",
                 "operation": {"name": "quantize", "parameters": {"bits": 8}},
                 "metrics": {"accuracy": 0.88}},
                {"id": "pc", "parent": "p",
                 "operation": {"name": "calibrate", "parameters": {"samples": 64}},
                 "metrics": {"accuracy": 0.9}},
                {"id": "pcq", "parent": "pc",
                 "operation": {"name": "quantize", "parameters": {"bits": 8}},
                 "metrics": {"accuracy": 0.89}},
            ],
        }
        path = tmp_path / "experiments.json"
        path.write_text(json.dumps(doc))
        assert main(["compare", str(path), "--select", "pq,pcq",
                     "--metric", "accuracy"]) == 0
        out = capsys.readouterr().out
        assert '"kind": "presence"' in out

    def test_unknown_model_exits_one(self, experiments_path, capsys):
        assert main(["compare", experiments_path, "--select", "nope",
                     "--metric", "accuracy"]) == 1
        assert "UnknownModel" in capsys.readouterr().err


class TestSim:
    def test_same_seed_twice_byte_identical(self, tmp_path, capsys):
        assert main(["sim", "--scenario", "repair", "--seed", "3",
                     "--out", str(tmp_path / "a")]) == 0
        assert main(["sim", "--scenario", "repair", "--seed", "3",
                     "--out", str(tmp_path / "b")]) == 0
        ha = hashlib.sha256((tmp_path / "a" / "experiments.json").read_bytes())
        hb = hashlib.sha256((tmp_path / "b" / "experiments.json").read_bytes())
        assert ha.hexdigest() == hb.hexdigest()


class TestReport:
    def test_report_renders_figures_and_table(self, experiments_path, tmp_path,
                                              capsys):
        out = tmp_path / "report"
        assert main(["report", experiments_path, "--out", str(out),
                     "--select", "p10,p30,p50,p70,p90",
                     "--metric", "accuracy"]) == 0
        names = {p.name for p in out.iterdir()}
        assert {"models.csv", "model_map.png", "metric_histograms.png",
                "scatterplot.png", "comparison.png"} <= names
        header = (out / "models.csv").read_text().splitlines()[0]
        assert header.startswith("id,parent,operation")
