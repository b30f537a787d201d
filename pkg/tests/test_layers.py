from __future__ import annotations

import json
import random

import pytest

from compresslab.errors import KindMismatch, PathMismatch, PathSetMismatch
from compresslab.layerdiff import (
    Histogram,
    TensorSummary,
    attach_diffs,
    build_layer_tree,
    diff_histogram,
    parse_layers_document,
    rank_layers,
    rebin,
)


def weights_summary(model, path, counts, edges=None, param_count=None, zeros=0):
    if edges is None:
        edges = list(range(len(counts) + 1))
    total = int(sum(counts))
    return TensorSummary(
        model=model, path=path,
        param_count=param_count if param_count is not None else total,
        zero_count=zeros, kind="weights",
        hist=Histogram(edges=[float(e) for e in edges],
                       counts=[float(c) for c in counts]))


class TestBuildLayerTree:
    def test_single_path_chain(self):
        tree = build_layer_tree({"m": [weights_summary("m", "fc1.weight", [4])]})
        assert [c.path for c in tree.children] == ["fc1"]
        assert [c.path for c in tree.children[0].children] == ["fc1.weight"]

    def test_prefix_grouping(self):
        entries = [weights_summary("m", p, [1])
                   for p in ("fc1.weight", "fc1.bias", "fc2.weight")]
        tree = build_layer_tree({"m": entries})
        assert sorted(c.path for c in tree.children) == ["fc1", "fc2"]
        fc1 = next(c for c in tree.children if c.path == "fc1")
        assert sorted(c.path for c in fc1.children) == ["fc1.bias", "fc1.weight"]

    def test_internal_counts_are_sums(self):
        entries = [
            weights_summary("m", "fc1.weight", [10], param_count=10, zeros=4),
            weights_summary("m", "fc1.bias", [2], param_count=2, zeros=1),
        ]
        tree = build_layer_tree({"m": entries})
        fc1 = tree.children[0]
        summary = fc1.summaries["m"]["weights"]
        assert summary.param_count == 12
        assert summary.zero_count == 5
        assert summary.sparsity == pytest.approx(5 / 12)

    def test_path_set_mismatch_names_model(self):
        with pytest.raises(PathSetMismatch) as err:
            build_layer_tree({
                "a": [weights_summary("a", "fc1.weight", [1])],
                "b": [weights_summary("b", "fc2.weight", [1])],
            })
        assert err.value.detail


class TestRebin:
    def test_identity_on_same_edges(self):
        h = Histogram(edges=[0.0, 1.0, 2.0], counts=[3.0, 7.0])
        out = rebin(h, [0.0, 1.0, 2.0])
        assert out.counts == [3.0, 7.0]

    def test_proportional_split(self):
        h = Histogram(edges=[0.0, 1.0], counts=[10.0])
        out = rebin(h, [0.0, 0.5, 1.0])
        assert out.counts == [5.0, 5.0]

    def test_round_trip_conserves_mass(self):
        # The intermediate grid shares the source endpoints (as diffing does),
        # so no mass can leak past the range on the way back.
        rng = random.Random(2)
        for _ in range(25):
            k = rng.randint(1, 12)
            edges_a = sorted(rng.uniform(-5, 5) for _ in range(k + 1))
            while any(b - a <= 0 for a, b in zip(edges_a, edges_a[1:])):
                edges_a = sorted(rng.uniform(-5, 5) for _ in range(k + 1))
            counts = [rng.uniform(0, 50) for _ in range(k)]
            h = Histogram(edges=edges_a, counts=counts)
            k2 = rng.randint(1, 15)
            span = edges_a[-1] - edges_a[0]
            edges_b = [edges_a[0] + i * span / k2 for i in range(k2)] + [edges_a[-1]]
            there = rebin(h, edges_b)
            assert sum(there.counts) == pytest.approx(sum(counts), rel=1e-9)
            back = rebin(there, edges_a)
            assert sum(back.counts) == pytest.approx(sum(counts), rel=1e-9)


class TestDiffHistogram:
    def test_identical_histograms_have_zero_change(self):
        a = weights_summary("base", "fc1.weight", [4, 6])
        b = weights_summary("m", "fc1.weight", [4, 6])
        diff = diff_histogram(a, b)
        assert diff.change_score == pytest.approx(0.0)
        assert all(g == 0 for g in diff.gained)
        assert all(l == 0 for l in diff.lost)

    def test_disjoint_supports_score_one(self):
        a = weights_summary("base", "fc1.weight", [10, 0], edges=[0, 1, 2])
        b = weights_summary("m", "fc1.weight", [0, 10], edges=[0, 1, 2])
        assert diff_histogram(a, b).change_score == pytest.approx(1.0)

    def test_half_concentration_scores_half(self):
        # Base uniform over two bins, model all in the first bin.
        a = weights_summary("base", "fc1.weight", [5, 5], edges=[0, 1, 2])
        b = weights_summary("m", "fc1.weight", [10, 0], edges=[0, 1, 2])
        assert diff_histogram(a, b).change_score == pytest.approx(0.5)

    def test_symmetry_and_bounds(self):
        rng = random.Random(9)
        for _ in range(30):
            k = rng.randint(1, 10)
            a = weights_summary("base", "p", [rng.uniform(0, 9) for _ in range(k)],
                                edges=[i * 0.5 for i in range(k + 1)])
            kb = rng.randint(1, 10)
            b = weights_summary("m", "p", [rng.uniform(0, 9) for _ in range(kb)],
                                edges=[i * 0.7 - 1 for i in range(kb + 1)])
            d_ab = diff_histogram(a, b).change_score
            d_ba = diff_histogram(b, a).change_score
            assert 0.0 <= d_ab <= 1.0
            assert d_ab == pytest.approx(d_ba)

    def test_decomposition_recomposes_each_side(self):
        a = weights_summary("base", "p", [3, 9, 1], edges=[0, 1, 2, 3])
        b = weights_summary("m", "p", [6, 2, 5], edges=[0, 1, 2, 3])
        diff = diff_histogram(a, b)
        for i in range(len(diff.unchanged)):
            model_mass = diff.unchanged[i] + diff.gained[i]
            base_mass = diff.unchanged[i] + diff.lost[i]
            assert model_mass == pytest.approx(13 / 13 * [6, 2, 5][i] / 13)
            assert base_mass == pytest.approx([3, 9, 1][i] / 13)

    def test_kind_and_path_mismatch(self):
        a = weights_summary("base", "fc1.weight", [1])
        b = weights_summary("m", "fc2.weight", [1])
        with pytest.raises(PathMismatch):
            diff_histogram(a, b)
        c = TensorSummary(model="m", path="fc1.weight", param_count=1, zero_count=0,
                          kind="activations", hist=Histogram([0.0, 1.0], [1.0]))
        with pytest.raises(KindMismatch):
            diff_histogram(a, c)


class TestRankLayers:
    def _tree(self, base_counts, model_counts):
        summaries = {
            "base": [weights_summary("base", p, c)
                     for p, c in base_counts.items()],
            "m": [weights_summary("m", p, c) for p, c in model_counts.items()],
        }
        tree = build_layer_tree(summaries)
        attach_diffs(tree, "base", "weights")
        return tree

    def test_unchanged_layers_rank_by_path(self):
        counts = {"fc1.weight": [5, 5], "fc2.weight": [5, 5]}
        tree = self._tree(counts, counts)
        ranked = rank_layers(tree, "m", "weights")
        assert ranked == [("fc1.weight", 0.0), ("fc2.weight", 0.0)]

    def test_perturbed_layer_ranks_first(self):
        tree = self._tree({"fc1.weight": [5, 5], "fc2.weight": [5, 5]},
                          {"fc1.weight": [5, 5], "fc2.weight": [10, 0]})
        ranked = rank_layers(tree, "m", "weights")
        assert ranked[0][0] == "fc2.weight"
        assert ranked[0][1] > ranked[1][1]

    def test_fixture_layer_prune_ranks_fc2_first(self, fixtures_dir):
        with open(fixtures_dir / "user_study" / "layers" / "base.json") as fh:
            base = parse_layers_document(json.load(fh))
        with open(fixtures_dir / "user_study" / "layers" / "pl-fc2-90.json") as fh:
            pruned = parse_layers_document(json.load(fh))
        tree = build_layer_tree({"base": base, "pl-fc2-90": pruned})
        attach_diffs(tree, "base", "weights")
        ranked = rank_layers(tree, "pl-fc2-90", "weights")
        paths = [p for p, _ in ranked]
        assert paths.index("fc2.weight") < paths.index("fc1.weight")

    def test_fixture_root_sparsity_tracks_prune_level(self, fixtures_dir):
        for sparsity, mid in ((0.5, "p50"), (0.9, "p90")):
            with open(fixtures_dir / "user_study" / "layers" / "base.json") as fh:
                base = parse_layers_document(json.load(fh))
            with open(fixtures_dir / "user_study" / "layers" / f"{mid}.json") as fh:
                pruned = parse_layers_document(json.load(fh))
            tree = build_layer_tree({"base": base, mid: pruned})
            summary = tree.summaries[mid]["weights"]
            assert summary.sparsity >= sparsity
