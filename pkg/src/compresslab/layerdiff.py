"""Layer hierarchy construction and histogram diffing (Layers tab).

Weight and activation distributions are ingested as per-layer histograms.
Comparing a model against the base rebins both onto shared edges, normalizes
them, and splits each bin into unchanged / gained / lost mass; the change
score is the total-variation distance between the normalized histograms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import KindMismatch, PathMismatch, PathSetMismatch, SchemaError

DEFAULT_BINS = 40

KIND_WEIGHTS = "weights"
KIND_ACTIVATIONS = "activations"


@dataclass
class Histogram:
    edges: list[float]
    counts: list[float]

    def __post_init__(self):
        if len(self.edges) != len(self.counts) + 1:
            raise SchemaError("histogram needs len(edges) == len(counts) + 1")
        for lo, hi in zip(self.edges, self.edges[1:]):
            if hi <= lo:
                raise SchemaError("histogram edges must be strictly ascending")

    def total(self) -> float:
        return float(sum(self.counts))

    def to_json(self) -> dict[str, Any]:
        return {"edges": list(self.edges), "counts": list(self.counts)}


@dataclass
class TensorSummary:
    model: str
    path: str
    param_count: int
    zero_count: int
    kind: str                      # weights | activations
    hist: Histogram | None = None

    @property
    def sparsity(self) -> float:
        return self.zero_count / self.param_count if self.param_count else 0.0


@dataclass
class DiffHistogram:
    edges: list[float]
    unchanged: list[float]
    gained: list[float]
    lost: list[float]
    change_score: float

    def to_json(self) -> dict[str, Any]:
        return {
            "edges": list(self.edges),
            "unchanged": list(self.unchanged),
            "gained": list(self.gained),
            "lost": list(self.lost),
            "change_score": self.change_score,
        }


@dataclass
class LayerTreeNode:
    path: str
    children: list["LayerTreeNode"] = field(default_factory=list)
    # model id -> kind -> summary
    summaries: dict[str, dict[str, TensorSummary]] = field(default_factory=dict)
    # model id -> kind -> diff vs. the base
    diffs: dict[str, dict[str, DiffHistogram]] = field(default_factory=dict)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> Iterable["LayerTreeNode"]:
        yield self
        for child in self.children:
            yield from child.walk()


def rebin(hist: Histogram, target_edges: list[float]) -> Histogram:
    """Reallocate histogram mass onto new edges by interval overlap.

    Mass is kept fractional; the total is preserved up to float rounding
    whenever the target range covers the source range.
    """
    for lo, hi in zip(target_edges, target_edges[1:]):
        if hi <= lo:
            raise SchemaError("target edges must be strictly ascending")
    out = [0.0] * (len(target_edges) - 1)
    for i, count in enumerate(hist.counts):
        if count == 0:
            continue
        lo, hi = hist.edges[i], hist.edges[i + 1]
        span = hi - lo
        for j in range(len(out)):
            t_lo, t_hi = target_edges[j], target_edges[j + 1]
            overlap = min(hi, t_hi) - max(lo, t_lo)
            if overlap > 0:
                out[j] += count * (overlap / span)
    return Histogram(edges=list(target_edges), counts=out)


def diff_histogram(base: TensorSummary, model: TensorSummary) -> DiffHistogram:
    """Decompose the model's histogram against the base's on shared edges."""
    if base.kind != model.kind:
        raise KindMismatch(f"cannot diff {base.kind} against {model.kind}")
    if base.path != model.path:
        raise PathMismatch(f"cannot diff {base.path!r} against {model.path!r}")
    if base.hist is None or model.hist is None:
        raise SchemaError(f"layer {base.path!r} lacks a histogram")

    lo = min(base.hist.edges[0], model.hist.edges[0])
    hi = max(base.hist.edges[-1], model.hist.edges[-1])
    k = max(len(base.hist.counts), len(model.hist.counts))
    if hi <= lo:
        hi = lo + 1.0
    width = (hi - lo) / k
    edges = [lo + i * width for i in range(k)] + [hi]

    b = rebin(base.hist, edges).counts
    m = rebin(model.hist, edges).counts
    b_total, m_total = sum(b), sum(m)
    b_hat = [x / b_total for x in b] if b_total else [0.0] * k
    m_hat = [x / m_total for x in m] if m_total else [0.0] * k

    unchanged = [min(bi, mi) for bi, mi in zip(b_hat, m_hat)]
    gained = [max(0.0, mi - bi) for bi, mi in zip(b_hat, m_hat)]
    lost = [max(0.0, bi - mi) for bi, mi in zip(b_hat, m_hat)]
    score = 0.5 * sum(abs(mi - bi) for bi, mi in zip(b_hat, m_hat))
    return DiffHistogram(edges=edges, unchanged=unchanged, gained=gained, lost=lost,
                         change_score=min(score, 1.0))


def build_layer_tree(summaries: dict[str, list[TensorSummary]]) -> LayerTreeNode:
    """Build the module hierarchy from dot-separated layer paths.

    ``summaries`` maps model id -> tensor summaries.  All models must report
    the same path set.  Internal nodes aggregate descendant weight counts.
    """
    if not summaries:
        raise SchemaError("no summaries given")
    path_sets = {model: {s.path for s in items} for model, items in summaries.items()}
    reference = next(iter(path_sets.values()))
    for model, paths in path_sets.items():
        if paths != reference:
            missing = sorted(reference - paths) + sorted(paths - reference)
            raise PathSetMismatch(
                f"model {model!r} reports a different layer set", detail=missing)

    root = LayerTreeNode(path="")
    index: dict[str, LayerTreeNode] = {"": root}

    def node_for(path: str) -> LayerTreeNode:
        if path in index:
            return index[path]
        parent_path = path.rsplit(".", 1)[0] if "." in path else ""
        parent = node_for(parent_path)
        node = LayerTreeNode(path=path)
        parent.children.append(node)
        index[path] = node
        return node

    for model, items in summaries.items():
        for summary in items:
            node = node_for(summary.path)
            node.summaries.setdefault(model, {})[summary.kind] = summary

    # Internal weight counts aggregate the descendants'.
    def aggregate(node: LayerTreeNode) -> dict[str, tuple[int, int]]:
        totals: dict[str, tuple[int, int]] = {}
        own = {
            model: (kinds[KIND_WEIGHTS].param_count, kinds[KIND_WEIGHTS].zero_count)
            for model, kinds in node.summaries.items() if KIND_WEIGHTS in kinds
        }
        if node.is_leaf:
            return own
        for child in node.children:
            for model, (p, z) in aggregate(child).items():
                tp, tz = totals.get(model, (0, 0))
                totals[model] = (tp + p, tz + z)
        for model, (p, z) in totals.items():
            existing = node.summaries.setdefault(model, {})
            hist = existing[KIND_WEIGHTS].hist if KIND_WEIGHTS in existing else None
            existing[KIND_WEIGHTS] = TensorSummary(
                model=model, path=node.path, param_count=p, zero_count=z,
                kind=KIND_WEIGHTS, hist=hist)
        return totals or own

    aggregate(root)
    for child in root.children:
        child.children.sort(key=lambda n: n.path)
    root.children.sort(key=lambda n: n.path)
    return root


def attach_diffs(tree: LayerTreeNode, base: str, kind: str) -> None:
    """Compute per-layer diffs of every model against the base, in place."""
    for node in tree.walk():
        base_summary = node.summaries.get(base, {}).get(kind)
        if base_summary is None or base_summary.hist is None:
            continue
        for model, kinds in node.summaries.items():
            summary = kinds.get(kind)
            if summary is None or summary.hist is None:
                continue
            node.diffs.setdefault(model, {})[kind] = diff_histogram(base_summary, summary)


def rank_layers(tree: LayerTreeNode, model: str, kind: str) -> list[tuple[str, float]]:
    """Leaf layers ordered by change score (descending), ties by path."""
    ranked = []
    for node in tree.walk():
        if not node.is_leaf:
            continue
        diff = node.diffs.get(model, {}).get(kind)
        if diff is not None:
            ranked.append((node.path, diff.change_score))
    ranked.sort(key=lambda t: (-t[1], t[0]))
    return ranked


# --- layers.json -------------------------------------------------------------

def parse_layers_document(doc: dict[str, Any]) -> list[TensorSummary]:
    """Read one model's layers.json into tensor summaries.

    Entries may carry a weight histogram, an activation histogram, or both;
    the hierarchy is implied by the dot-separated paths.
    """
    if "model" not in doc or "layers" not in doc:
        raise SchemaError("layers document needs 'model' and 'layers'")
    model = str(doc["model"])
    out: list[TensorSummary] = []
    for entry in doc["layers"]:
        path = str(entry["path"])
        param_count = int(entry.get("param_count", 0))
        zero_count = int(entry.get("zero_count", 0))
        if not 0 <= zero_count <= max(param_count, 0):
            raise SchemaError(f"layer {path!r} zero_count out of range")
        if "weight_hist" in entry and entry["weight_hist"] is not None:
            hist = Histogram(edges=list(entry["weight_hist"]["edges"]),
                             counts=list(entry["weight_hist"]["counts"]))
            out.append(TensorSummary(model=model, path=path, param_count=param_count,
                                     zero_count=zero_count, kind=KIND_WEIGHTS, hist=hist))
        else:
            out.append(TensorSummary(model=model, path=path, param_count=param_count,
                                     zero_count=zero_count, kind=KIND_WEIGHTS, hist=None))
        if "activation_hist" in entry and entry["activation_hist"] is not None:
            hist = Histogram(edges=list(entry["activation_hist"]["edges"]),
                             counts=list(entry["activation_hist"]["counts"]))
            out.append(TensorSummary(model=model, path=path, param_count=param_count,
                                     zero_count=zero_count, kind=KIND_ACTIVATIONS,
                                     hist=hist))
    return out
