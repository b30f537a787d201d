from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from compresslab.sim.dataset import make_dataset, make_imbalanced_dataset
from compresslab.sim.net import (
    accuracy,
    evaluate_model,
    finetune,
    init_net,
    loss_and_gradients,
    train_mlp,
)
from compresslab.sim.ops import (
    calibrate_biases,
    prune_global_magnitude,
    prune_layer_magnitude,
    quantize_uniform,
    restore_layers,
    round_half_away_from_zero,
)
from compresslab.sim.scenarios import DEFAULT_SEED, emit_fixtures, run_scenario

SEED = DEFAULT_SEED


@pytest.fixture(scope="module")
def trained():
    dataset = make_dataset(SEED)
    return dataset, train_mlp(dataset, seed=SEED)


class TestDataset:
    def test_deterministic_given_seed(self):
        a = make_dataset(3)
        b = make_dataset(3)
        assert np.array_equal(a.x_train, b.x_train)
        assert np.array_equal(a.y_test, b.y_test)

    def test_center_separation(self):
        ds = make_dataset(SEED)
        for i in range(4):
            for j in range(i + 1, 4):
                dist = np.linalg.norm(ds.centers[i] - ds.centers[j])
                assert dist >= 4 * 0.5 - 1e-9

    def test_imbalanced_rare_group(self):
        ds = make_imbalanced_dataset(SEED)
        rare = sum(1 for g in ds.groups_test if g == "rare")
        assert 0 < rare < len(ds.groups_test) * 0.2


class TestTraining:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError):
            train_mlp(make_dataset(SEED), epochs=0)

    def test_default_config_reaches_point_nine(self, trained):
        dataset, net = trained
        assert accuracy(net, dataset.x_test, dataset.y_test) >= 0.9

    def test_loss_curve_finite_and_decreasing(self):
        dataset = make_dataset(SEED)
        net = init_net(SEED)
        losses = []
        for _ in range(50):
            loss, grads = loss_and_gradients(net, dataset.x_train, dataset.y_train)
            assert np.isfinite(loss)
            losses.append(loss)
            for layer, (dw, db) in zip(net.layers, grads):
                layer.weights -= 0.1 * dw
                layer.bias -= 0.1 * db
        assert losses[-1] < losses[0]

    def test_analytic_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(12, 16))
        y = rng.integers(0, 4, size=12)
        net = init_net(1)
        _, grads = loss_and_gradients(net, x, y)
        h = 1e-5
        for li, layer in enumerate(net.layers):
            for arr, grad in ((layer.weights, grads[li][0]),
                              (layer.bias, grads[li][1])):
                flat = arr.ravel()
                idxs = rng.choice(flat.size, size=min(20, flat.size), replace=False)
                for idx in idxs:
                    orig = flat[idx]
                    flat[idx] = orig + h
                    up = loss_and_gradients(net, x, y)[0]
                    flat[idx] = orig - h
                    down = loss_and_gradients(net, x, y)[0]
                    flat[idx] = orig
                    fd = (up - down) / (2 * h)
                    g = grad.ravel()[idx]
                    denom = max(abs(fd), abs(g), 1e-8)
                    assert abs(fd - g) / denom < 1e-4


class TestPrune:
    def test_zero_sparsity_is_identity(self, trained):
        _, net = trained
        out = prune_global_magnitude(net, 0.0)
        for a, b in zip(net.layers, out.layers):
            assert np.array_equal(a.weights, b.weights)

    def test_smallest_magnitudes_zeroed(self):
        net = init_net(0, shape=(2, 2, 2))
        net.layers[0].weights = np.array([[0.5, -0.1], [0.3, 0.2]])
        net.layers[1].weights = np.array([[1.0, -1.0], [2.0, 2.0]])
        out = prune_global_magnitude(net, 0.25)
        # 8 weights, floor(0.25*8)=2: the two smallest are -0.1 and 0.2.
        assert np.array_equal(out.layers[0].weights,
                              np.array([[0.5, 0.0], [0.3, 0.0]]))
        assert np.array_equal(out.layers[1].weights, net.layers[1].weights)

    def test_exact_floor_count(self, trained):
        _, net = trained
        total = sum(l.weights.size for l in net.layers)
        for s in (0.1, 0.37, 0.99):
            out = prune_global_magnitude(net, s)
            zeros = sum(int(np.sum(l.weights == 0.0)) for l in out.layers)
            assert zeros == int(np.floor(s * total))

    def test_double_prune_zeros_max_of_both(self, trained):
        _, net = trained
        total = sum(l.weights.size for l in net.layers)
        for s1, s2 in ((0.3, 0.6), (0.6, 0.3), (0.5, 0.5)):
            out = prune_global_magnitude(prune_global_magnitude(net, s1), s2)
            zeros = sum(int(np.sum(l.weights == 0.0)) for l in out.layers)
            assert zeros == max(int(np.floor(s1 * total)), int(np.floor(s2 * total)))

    def test_per_layer_prune_touches_only_target(self, trained):
        _, net = trained
        out = prune_layer_magnitude(net, {"fc2": 0.9})
        assert np.array_equal(out.layers[0].weights, net.layers[0].weights)
        zeros = int(np.sum(out.layers[1].weights == 0.0))
        assert zeros == int(np.floor(0.9 * net.layers[1].weights.size))


class TestQuantize:
    def test_on_grid_tensor_unchanged(self):
        net = init_net(0, shape=(2, 2, 2))
        net.layers[0].weights = np.array([[0.9, -0.9], [0.0, 0.9]])
        net.layers[1].weights = np.array([[1.0, -1.0], [0.0, 1.0]])
        out = quantize_uniform(net, 2)
        assert np.allclose(out.layers[0].weights, net.layers[0].weights)
        assert np.allclose(out.layers[1].weights, net.layers[1].weights)

    def test_two_bit_example(self):
        net = init_net(0, shape=(3, 1, 2))
        net.layers[0].weights = np.array([[0.9], [-0.45], [0.2]])
        out = quantize_uniform(net, 2)
        # scale 0.9; -0.45/0.9 = -0.5 rounds away from zero to -1.
        assert np.allclose(out.layers[0].weights.ravel(), [0.9, -0.9, 0.0])

    def test_error_bound_and_level_count(self, trained):
        _, net = trained
        for bits in (2, 4, 8):
            out = quantize_uniform(net, bits)
            for before, after in zip(net.layers, out.layers):
                scale = np.max(np.abs(before.weights)) / (2 ** (bits - 1) - 1)
                assert np.all(np.abs(before.weights - after.weights)
                              <= scale / 2 + 1e-12)
                assert len(np.unique(after.weights)) <= 2 ** bits - 1

    def test_round_half_away_from_zero(self):
        got = round_half_away_from_zero(np.array([0.5, -0.5, 1.5, -1.5, 0.4]))
        assert np.array_equal(got, np.array([1.0, -1.0, 2.0, -2.0, 0.0]))


class TestRestore:
    def test_restore_all_recovers_base(self, trained):
        _, net = trained
        pruned = prune_global_magnitude(net, 0.9)
        restored = restore_layers(pruned, net, ["fc1", "fc2"])
        for a, b in zip(restored.layers, net.layers):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)

    def test_restore_nothing_is_identity(self, trained):
        _, net = trained
        pruned = prune_global_magnitude(net, 0.9)
        out = restore_layers(pruned, net, [])
        for a, b in zip(out.layers, pruned.layers):
            assert np.array_equal(a.weights, b.weights)

    def test_restore_fc1_after_heavy_prune(self, trained):
        dataset, net = trained
        pruned = prune_global_magnitude(net, 0.9)
        restored = restore_layers(pruned, net, ["fc1"])
        assert np.array_equal(restored.layers[0].weights, net.layers[0].weights)
        assert np.sum(restored.layers[1].weights == 0.0) > 0
        assert accuracy(restored, dataset.x_test, dataset.y_test) >= \
            accuracy(pruned, dataset.x_test, dataset.y_test)


class TestCalibrate:
    def test_identity_when_net_equals_base(self, trained):
        dataset, net = trained
        out = calibrate_biases(net, net, dataset.x_train[:32])
        for a, b in zip(out.layers, net.layers):
            assert np.allclose(a.bias, b.bias, atol=1e-9)

    def test_mean_preactivations_match_base(self, trained):
        dataset, net = trained
        sample = dataset.x_train[:64]
        quantized = quantize_uniform(net, 2)
        calibrated = calibrate_biases(quantized, net, sample)
        base_z = net.pre_activations(sample)
        cal_z = calibrated.pre_activations(sample)
        for zb, zc in zip(base_z, cal_z):
            assert np.allclose(zb.mean(axis=0), zc.mean(axis=0), atol=1e-6)

    def test_calibration_does_not_hurt_quantize2(self, trained):
        dataset, net = trained
        quantized = quantize_uniform(net, 2)
        calibrated = calibrate_biases(quantized, net, dataset.x_train[:64])
        drop = accuracy(quantized, dataset.x_test, dataset.y_test) - \
            accuracy(calibrated, dataset.x_test, dataset.y_test)
        assert drop <= 0.02


class TestFinetune:
    def test_zero_steps_is_identity(self, trained):
        dataset, net = trained
        out = finetune(net, dataset, 0, 0.05)
        for a, b in zip(out.layers, net.layers):
            assert np.array_equal(a.weights, b.weights)

    def test_mask_preserved(self, trained):
        dataset, net = trained
        pruned = prune_global_magnitude(net, 0.7)
        tuned = finetune(pruned, dataset, 50, 0.05)
        for before, after in zip(pruned.layers, tuned.layers):
            assert np.all(after.weights[before.weights == 0.0] == 0.0)

    def test_train_loss_strictly_decreases(self, trained):
        dataset, net = trained
        pruned = prune_global_magnitude(net, 0.7)
        before = loss_and_gradients(pruned, dataset.x_train, dataset.y_train)[0]
        tuned = finetune(pruned, dataset, 100, 0.05)
        after = loss_and_gradients(tuned, dataset.x_train, dataset.y_train)[0]
        assert after < before


class TestEvaluate:
    def test_fresh_net_metrics(self, trained):
        dataset, net = trained
        metrics = evaluate_model(net, dataset)
        total = sum(l.weights.size for l in net.layers)
        assert metrics["sparsity"] == 0.0
        assert metrics["size_bytes"] == total * 4
        assert metrics["latency_proxy"] == total

    def test_p99_size_shrinks(self, trained):
        dataset, net = trained
        base_size = evaluate_model(net, dataset)["size_bytes"]
        pruned_size = evaluate_model(prune_global_magnitude(net, 0.99),
                                     dataset)["size_bytes"]
        assert pruned_size <= 0.02 * base_size

    def test_quantize8_byte_size_and_latency(self, trained):
        dataset, net = trained
        base = evaluate_model(net, dataset)
        q8 = evaluate_model(quantize_uniform(net, 8), dataset)
        # Size is the nonzero count in single bytes.  A few weights below
        # half the quantization step round to exact zeros, so the multiply
        # count may dip slightly below the base's.
        assert q8["size_bytes"] == q8["latency_proxy"] * 1.0
        assert base["latency_proxy"] * 0.97 <= q8["latency_proxy"] \
            <= base["latency_proxy"]

    def test_quantize8_accuracy_near_lossless(self, trained):
        dataset, net = trained
        drop = accuracy(net, dataset.x_test, dataset.y_test) - \
            accuracy(quantize_uniform(net, 8), dataset.x_test, dataset.y_test)
        assert drop <= 0.01


class TestScenarios:
    def test_same_seed_twice_is_byte_identical(self, tmp_path):
        emit_fixtures("repair", SEED, tmp_path / "a")
        emit_fixtures("repair", SEED, tmp_path / "b")
        for path_a in sorted((tmp_path / "a").rglob("*.json")):
            path_b = tmp_path / "b" / path_a.relative_to(tmp_path / "a")
            ha = hashlib.sha256(path_a.read_bytes()).hexdigest()
            hb = hashlib.sha256(path_b.read_bytes()).hexdigest()
            assert ha == hb, path_a.name

    def test_user_study_counts(self, user_study_store):
        assert len(user_study_store) == 20
        ops = [n.operation.name for n in user_study_store.nodes.values()
               if n.operation]
        assert ops.count("prune") == 6
        assert ops.count("quantize") == 1
        assert ops.count("finetune") == 6
        assert ops.count("calibrate") == 6

    def test_repair_restoration_never_hurts(self, repair_store):
        for mid, node in repair_store.nodes.items():
            if node.operation and node.operation.name == "restore":
                parent = repair_store.nodes[node.parent_id]
                assert node.metrics["accuracy"] >= parent.metrics["accuracy"]

    def test_bias_audit_rare_group_suffers_more(self, fixtures_dir, bias_store):
        import compresslab.behaviors as bh
        root = fixtures_dir / "bias_audit"
        with open(root / "dataset.json") as fh:
            doc = json.load(fh)
        instances = [bh.InstanceRecord(i["id"], i["truth"], i["group"])
                     for i in doc["instances"]]

        def outputs(mid):
            with open(root / "outputs" / f"{mid}.json") as fh:
                raw = json.load(fh)
            return {e["id"]: bh.OutputRecord(model=mid, instance=e["id"],
                                             label=e["label"], probs=e["probs"])
                    for e in raw["instances"]}

        spec = bh.ComparisonMetricSpec("correctness", "pct_error_change")
        values = {mid: bh.eval_metric(spec, outputs(mid), outputs("base"), instances)
                  for mid in ("base", "p99")}
        rows = bh.aggregate_rows(values, instances, "group", "base",
                                 "pct_error_change")
        by_key = {r.key: r.per_model["p99"] for r in rows}
        assert by_key["rare"].relative is not None
        assert by_key["common"].relative is not None
        assert by_key["rare"].relative > by_key["common"].relative

    def test_unknown_scenario_rejected(self):
        with pytest.raises(ValueError):
            run_scenario("nope", 1)
