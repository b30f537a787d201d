"""Acceptance suite: one test per top-level criterion.

Each test prints a PASS/FAIL line (run with -s to see them) and enforces the
stated runtime budget.
"""

from __future__ import annotations

import json
import random
import time

import numpy as np
import pytest

from gencases import random_selection_case, random_tree_doc
from oracles import minimal_variable_cost

import compresslab.behaviors as bh
from compresslab.analytics import MetricFilter, apply_filters, pareto_front
from compresslab.layerdiff import Histogram, rebin
from compresslab.maplayout import MODE_BY_OPERATION, MODE_BY_STEP, compute_layout
from compresslab.sim.dataset import make_dataset
from compresslab.sim.net import init_net, loss_and_gradients, train_mlp
from compresslab.sim.ops import (
    prune_global_magnitude,
    quantize_uniform,
    restore_layers,
)
from compresslab.sim.scenarios import DEFAULT_SEED, emit_fixtures
from compresslab.store import load_store, load_store_file, op_path
from compresslab.variables import build_comparison, infer_variables


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {status}{suffix}")
    assert ok, f"{name}{suffix}"


class TestAcceptance:
    def test_calibrate_example(self):
        started = time.monotonic()
        doc = {
            "schema_version": 1,
            "metrics": [{"name": "accuracy", "unit": "",
                         "objective": "maximize", "default_encoding": None}],
            "models": [
                {"id": "base", "parent": None, "operation": None,
                 "metrics": {"accuracy": 0.95}},
                {"id": "p", "parent": "base",
                 "operation": {"name": "prune", "parameters": {"sparsity": 0.5}},
                 "metrics": {"accuracy": 0.9}},
                {"id": "pq", "parent": "p",
                 "operation": {"name": "quantize", "parameters": {"bits": 8}},
                 "metrics": {"accuracy": 0.88}},
                {"id": "pc", "parent": "p",
                 "operation": {"name": "calibrate", "parameters": {"samples": 64}},
                 "metrics": {"accuracy": 0.91}},
                {"id": "pcq", "parent": "pc",
                 "operation": {"name": "quantize", "parameters": {"bits": 8}},
                 "metrics": {"accuracy": 0.9}},
            ],
        }
        store = load_store(doc)
        variables = infer_variables(store, {"pq", "pcq"})
        result = build_comparison(store, {"pq", "pcq"}, "accuracy")
        elapsed = time.monotonic() - started
        ok = (len(variables) == 1
              and variables[0].kind == "presence"
              and set(variables[0].values) == {"true", "false"}
              and result.chart is not None
              and elapsed < 1.0)
        report("calibrate-example", ok, f"{elapsed:.2f}s")

    def test_variable_set_minimality(self):
        started = time.monotonic()
        failures = []
        cases = 0
        for seed in range(110):
            store, selection = random_selection_case(seed)
            cases += 1
            variables = infer_variables(store, selection)
            cost = (len(variables), sum(v.weight for v in variables))
            paths = [
                tuple((o.name, tuple(sorted(o.parameters.items())))
                      for o in op_path(store, mid))
                for mid in store.nodes if mid in set(selection)
            ]
            oracle = minimal_variable_cost(paths, cost)
            if oracle != cost:
                failures.append((seed, cost, oracle))
        elapsed = time.monotonic() - started
        ok = not failures and cases >= 100 and elapsed < 60.0
        report("variable-set-minimality", ok,
               f"{cases} cases, {len(failures)} failures, {elapsed:.1f}s")

    def test_layout_invariants(self):
        started = time.monotonic()
        ok = True
        detail = ""
        rng = random.Random(0)
        for case in range(200):
            store = load_store(random_tree_doc(
                rng, max_nodes=rng.randint(2, 200), n_roots=rng.randint(1, 3)))
            mode = MODE_BY_STEP if case % 2 == 0 else MODE_BY_OPERATION
            layout = compute_layout(store, mode, color_metric="accuracy",
                                    size_metric="accuracy")
            positions = [(n.column, n.row) for n in layout.nodes.values()]
            if len(set(positions)) != len(positions):
                ok, detail = False, f"case {case}: duplicate positions"
                break
            if any(layout.nodes[e.child].column <= layout.nodes[e.parent].column
                   for e in layout.edges):
                ok, detail = False, f"case {case}: non-increasing columns"
                break
            if compute_layout(store, mode, color_metric="accuracy",
                              size_metric="accuracy").to_json() != layout.to_json():
                ok, detail = False, f"case {case}: nondeterministic"
                break
            if mode == MODE_BY_OPERATION:
                canonical = {}
                for mid, node in store.nodes.items():
                    if node.operation is not None:
                        canonical[node.operation.name] = max(
                            canonical.get(node.operation.name, 0),
                            store.depth(mid))
                for mid, node in store.nodes.items():
                    if node.operation is None:
                        continue
                    col = layout.nodes[mid].column
                    parent_col = layout.nodes[node.parent_id].column
                    target = canonical[node.operation.name]
                    if col < target or (parent_col + 1 <= target and col != target):
                        ok, detail = False, f"case {case}: canonical column broken"
                        break
                if not ok:
                    break
        elapsed = time.monotonic() - started
        ok = ok and elapsed < 30.0
        report("layout-invariants", ok, detail or f"200 forests, {elapsed:.1f}s")

    def test_numeric_kernels(self):
        rng = np.random.default_rng(1)
        ok = True
        detail = ""

        # KL on 10^4 random distribution pairs, and on identical pairs.
        for _ in range(10_000):
            dim = int(rng.integers(2, 8))
            p = rng.random(dim)
            q = rng.random(dim)
            p = (p / p.sum()).tolist()
            q = (q / q.sum()).tolist()
            if bh.kl_divergence(p, q) < -1e-8:
                ok, detail = False, "negative KL"
                break
            if abs(bh.kl_divergence(p, p)) > 1e-9:
                ok, detail = False, "KL(p,p) too large"
                break

        # Total variation bounds via diff decomposition.
        if ok:
            from compresslab.layerdiff import TensorSummary, diff_histogram

            def summary(model, counts, edges):
                return TensorSummary(model=model, path="w", param_count=0,
                                     zero_count=0, kind="weights",
                                     hist=Histogram(edges=edges, counts=counts))

            same = diff_histogram(summary("b", [3.0, 7.0], [0.0, 1.0, 2.0]),
                                  summary("m", [3.0, 7.0], [0.0, 1.0, 2.0]))
            disjoint = diff_histogram(summary("b", [10.0, 0.0], [0.0, 1.0, 2.0]),
                                      summary("m", [0.0, 10.0], [0.0, 1.0, 2.0]))
            if same.change_score != pytest.approx(0.0) or \
                    disjoint.change_score != pytest.approx(1.0):
                ok, detail = False, "TV endpoints wrong"
            for _ in range(200):
                k = int(rng.integers(1, 12))
                a = summary("b", rng.random(k).tolist(),
                            [float(i) for i in range(k + 1)])
                b = summary("m", rng.random(k).tolist(),
                            [float(i) * 0.7 - 1 for i in range(k + 1)])
                score = diff_histogram(a, b).change_score
                if not 0.0 <= score <= 1.0:
                    ok, detail = False, "TV out of bounds"
                    break

        # Rebin mass conservation onto covering grids.
        if ok:
            for _ in range(100):
                k = int(rng.integers(1, 10))
                edges = sorted({float(x) for x in rng.uniform(-4, 4, k + 1)})
                if len(edges) < 2:
                    continue
                counts = rng.uniform(0, 20, len(edges) - 1).tolist()
                hist = Histogram(edges=edges, counts=counts)
                k2 = int(rng.integers(1, 14))
                span = edges[-1] - edges[0]
                target = [edges[0] + i * span / k2 for i in range(k2)] + [edges[-1]]
                out = rebin(hist, target)
                if abs(sum(out.counts) - sum(counts)) > 1e-9 * max(sum(counts), 1):
                    ok, detail = False, "rebin lost mass"
                    break

        # Analytic gradients against central finite differences.
        if ok:
            x = rng.normal(size=(10, 16))
            y = rng.integers(0, 4, size=10)
            net = init_net(3)
            _, grads = loss_and_gradients(net, x, y)
            h = 1e-5
            for li, layer in enumerate(net.layers):
                flat = layer.weights.ravel()
                for idx in rng.choice(flat.size, size=25, replace=False):
                    orig = flat[idx]
                    flat[idx] = orig + h
                    up = loss_and_gradients(net, x, y)[0]
                    flat[idx] = orig - h
                    down = loss_and_gradients(net, x, y)[0]
                    flat[idx] = orig
                    fd = (up - down) / (2 * h)
                    g = grads[li][0].ravel()[idx]
                    if abs(fd - g) / max(abs(fd), abs(g), 1e-8) > 1e-4:
                        ok, detail = False, f"gradient mismatch at layer {li}"
                        break
                if not ok:
                    break

        report("numeric-kernels", ok, detail)

    def test_compression_operators(self):
        dataset = make_dataset(DEFAULT_SEED)
        net = train_mlp(dataset, seed=DEFAULT_SEED)
        ok = True
        detail = ""

        for bits in (2, 3, 8, 16):
            quantized = quantize_uniform(net, bits)
            for before, after in zip(net.layers, quantized.layers):
                scale = np.max(np.abs(before.weights)) / (2 ** (bits - 1) - 1)
                if len(np.unique(after.weights)) > 2 ** bits - 1:
                    ok, detail = False, f"too many levels at {bits} bits"
                if np.any(np.abs(before.weights - after.weights) >
                          scale / 2 + 1e-12):
                    ok, detail = False, f"quantize error bound broken at {bits}"

        total = sum(l.weights.size for l in net.layers)
        for s in (0.1, 0.33, 0.66, 0.99):
            pruned = prune_global_magnitude(net, s)
            zeros = sum(int(np.sum(l.weights == 0.0)) for l in pruned.layers)
            if zeros != int(np.floor(s * total)):
                ok, detail = False, f"prune count wrong at {s}"

        restored = restore_layers(prune_global_magnitude(net, 0.9), net,
                                  ["fc1", "fc2"])
        for a, b in zip(restored.layers, net.layers):
            if not (np.array_equal(a.weights, b.weights)
                    and np.array_equal(a.bias, b.bias)):
                ok, detail = False, "restore(all) differs from base"

        report("compression-operators", ok, detail)

    def test_end_to_end_fixtures(self, tmp_path):
        started = time.monotonic()
        ok = True
        detail = ""

        out = tmp_path / "fixtures"
        for scenario in ("user_study", "repair", "bias_audit"):
            emit_fixtures(scenario, DEFAULT_SEED, out / scenario)

        store = load_store_file(str(out / "user_study" / "experiments.json"))
        if len(store) != 20:
            ok, detail = False, f"user_study has {len(store)} models"
        compute_layout(store, MODE_BY_OPERATION, color_metric="accuracy",
                       size_metric="size_bytes")
        enabled = apply_filters(store, [MetricFilter("accuracy", 0.9, 1.0)])
        if not (0 < len(enabled) < len(store)):
            ok, detail = False, "accuracy filter is not a nonempty strict subset"
        if not pareto_front(store, "size_bytes", "accuracy"):
            ok, detail = False, "empty Pareto front"

        repair = load_store_file(str(out / "repair" / "experiments.json"))
        for node in repair.nodes.values():
            if node.operation and node.operation.name == "restore":
                parent = repair.nodes[node.parent_id]
                if node.metrics["accuracy"] < parent.metrics["accuracy"]:
                    ok, detail = False, f"restore hurt accuracy at {node.id}"

        root = out / "bias_audit"
        with open(root / "dataset.json") as fh:
            instances = [bh.InstanceRecord(i["id"], i["truth"], i["group"])
                         for i in json.load(fh)["instances"]]

        def outputs(mid):
            with open(root / "outputs" / f"{mid}.json") as fh:
                raw = json.load(fh)
            return {e["id"]: bh.OutputRecord(model=mid, instance=e["id"],
                                             label=e["label"], probs=e["probs"])
                    for e in raw["instances"]}

        spec = bh.ComparisonMetricSpec("correctness", "pct_error_change")
        values = {mid: bh.eval_metric(spec, outputs(mid), outputs("base"),
                                      instances)
                  for mid in ("base", "p99")}
        rows = bh.aggregate_rows(values, instances, "group", "base",
                                 "pct_error_change")
        cells = {r.key: r.per_model["p99"] for r in rows}
        if cells["rare"].relative is None or cells["common"].relative is None \
                or cells["rare"].relative <= cells["common"].relative:
            ok, detail = False, "rare group not disproportionately impacted"

        elapsed = time.monotonic() - started
        ok = ok and elapsed < 120.0
        report("end-to-end-fixtures", ok, detail or f"{elapsed:.1f}s")

    def test_behavior_arithmetic(self):
        instances = [bh.InstanceRecord(f"i{k}", truth="x", group="g")
                     for k in range(10)]
        base_vals = {f"i{k}": (0.0 if k < 2 else 1.0) for k in range(10)}
        model_vals = {f"i{k}": (0.0 if k < 5 else 1.0) for k in range(10)}
        rows = bh.aggregate_rows({"base": base_vals, "m": model_vals}, instances,
                                 "group", "base", "pct_error_change")
        cell = rows[0].per_model["m"]
        base_cell = rows[0].per_model["base"]

        diff_rows = bh.aggregate_rows({"base": base_vals, "m": model_vals},
                                      instances, "group", "base", "difference")
        base_diffs = [r.per_model["base"].relative for r in diff_rows]
        ok = (cell.relative == pytest.approx(150.0)
              and base_cell.relative == pytest.approx(0.0)
              and all(d == pytest.approx(0.0) for d in base_diffs))
        report("behavior-arithmetic", ok)

    def test_api_contract(self, fixtures_dir):
        from fastapi.testclient import TestClient

        from test_service import (
            GOLDEN_DIR,
            GOLDEN_REQUESTS,
            _provider_server,
            _ProviderState,
            approx_equal,
            make_config,
            run_request,
        )
        from compresslab.service import create_app

        client = TestClient(create_app(make_config(fixtures_dir)))
        ok = True
        detail = ""
        for name, spec in sorted(GOLDEN_REQUESTS.items()):
            response = run_request(client, spec)
            expected = json.loads((GOLDEN_DIR / f"{name}.json").read_text())
            if response.status_code != 200 or \
                    not approx_equal(response.json(), expected):
                ok, detail = False, f"golden mismatch: {name}"
                break

        if ok and client.get("/v1/models/unknown-id").status_code != 404:
            ok, detail = False, "unknown id not 404"

        if ok:
            state = _ProviderState(fixtures_dir / "user_study")
            server = _provider_server(state)
            try:
                state.echo_wrong_model = True
                bad = TestClient(create_app(make_config(
                    fixtures_dir, outputs_dir=None, layers_dir=None,
                    provider_url=f"http://127.0.0.1:{server.server_port}")))
                response = bad.post("/v1/behaviors", json={
                    "ids": ["base", "p90"], "metric": "correctness",
                    "group_by": "group"})
                if response.status_code != 502:
                    ok, detail = False, "echo violation not 502"
            finally:
                server.shutdown()

        report("api-contract", ok, detail)
