"""Model Map layout: deterministic node positions, visual encodings, and
interpolated edge geometry.

Columns either track the experiment step (depth) or give every operation
name a canonical column so that, e.g., all quantize nodes line up.  Rows come
from a DFS leaf numbering; internal nodes sit at the mean of their children,
which keeps parents centered and positions unique.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import UnknownMetric
from .store import ModelStore, format_scalar

COL_SPACING = 120.0
ROW_SPACING = 36.0
RADIUS_RANGE = (4.0, 16.0)
EDGE_STOPS = 8

MODE_BY_STEP = "by_step"
MODE_BY_OPERATION = "by_operation"


@dataclass
class EncodingScale:
    metric: str
    domain: tuple[float, float]
    range: tuple[float, float]
    kind: str  # "sqrt_size" | "linear_color"

    def position(self, value: float) -> float:
        lo, hi = self.domain
        if hi == lo:
            t = 0.5
        else:
            t = (value - lo) / (hi - lo)
            t = min(max(t, 0.0), 1.0)
        if self.kind == "sqrt_size":
            t = math.sqrt(t)
        return self.range[0] + t * (self.range[1] - self.range[0])

    def to_json(self) -> dict[str, Any]:
        return {
            "metric": self.metric,
            "domain": list(self.domain),
            "range": list(self.range),
            "kind": self.kind,
        }


@dataclass
class LayoutNode:
    column: int
    row: float
    x: float
    y: float
    radius: float
    color_value: float | None
    disabled: bool


@dataclass
class LayoutEdge:
    parent: str
    child: str
    stops: list[dict[str, float | None]]


@dataclass
class MapLayout:
    mode: str
    nodes: dict[str, LayoutNode]
    edges: list[LayoutEdge]
    scales: dict[str, EncodingScale | None] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "nodes": {
                mid: {
                    "column": n.column,
                    "row": n.row,
                    "x": n.x,
                    "y": n.y,
                    "radius": n.radius,
                    "color_value": n.color_value,
                    "disabled": n.disabled,
                }
                for mid, n in self.nodes.items()
            },
            "edges": [
                {"parent": e.parent, "child": e.child, "stops": e.stops}
                for e in self.edges
            ],
            "scales": {
                key: (scale.to_json() if scale else None)
                for key, scale in self.scales.items()
            },
        }


def _subtree_sizes(store: ModelStore) -> dict[str, int]:
    sizes: dict[str, int] = {}

    def visit(mid: str) -> int:
        total = 1
        for child in store.children[mid]:
            total += visit(child)
        sizes[mid] = total
        return total

    for root in store.roots:
        visit(root)
    return sizes


def _columns(store: ModelStore, mode: str) -> dict[str, int]:
    if mode == MODE_BY_STEP:
        return {mid: store.depth(mid) for mid in store.nodes}

    # Canonical column per operation name: the deepest step at which any
    # edge with that name occurs.  A parent-monotonicity shift keeps
    # provenance flowing left to right.
    canonical: dict[str, int] = {}
    for mid, node in store.nodes.items():
        if node.operation is not None:
            depth = store.depth(mid)
            canonical[node.operation.name] = max(canonical.get(node.operation.name, 0), depth)

    columns: dict[str, int] = {}

    def assign(mid: str) -> None:
        node = store.nodes[mid]
        if node.parent_id is None:
            columns[mid] = 0
        else:
            assert node.operation is not None
            columns[mid] = max(columns[node.parent_id] + 1, canonical[node.operation.name])
        for child in store.children[mid]:
            assign(child)

    for root in store.roots:
        assign(root)
    return columns


def _rows(store: ModelStore) -> dict[str, float]:
    sizes = _subtree_sizes(store)
    rows: dict[str, float] = {}
    next_leaf = 0.0

    def visit(mid: str) -> float:
        nonlocal next_leaf
        children = sorted(store.children[mid], key=lambda c: (-sizes[c], c))
        if not children:
            rows[mid] = next_leaf
            next_leaf += 1.0
            return rows[mid]
        child_rows = [visit(c) for c in children]
        rows[mid] = sum(child_rows) / len(child_rows)
        return rows[mid]

    for i, root in enumerate(store.roots):
        if i > 0:
            next_leaf += 1.0  # 1-row gap between stacked trees
        visit(root)
    return rows


def _scale_for(store: ModelStore, metric: str | None, kind: str,
               out_range: tuple[float, float]) -> EncodingScale | None:
    if metric is None:
        return None
    values = store.values_for(metric)  # raises UnknownMetric for undeclared
    if not values:
        return EncodingScale(metric, (0.0, 1.0), out_range, kind)
    return EncodingScale(metric, (min(values.values()), max(values.values())), out_range, kind)


def compute_layout(store: ModelStore, mode: str = MODE_BY_STEP,
                   color_metric: str | None = None, size_metric: str | None = None,
                   enabled: set[str] | None = None,
                   col_spacing: float = COL_SPACING,
                   row_spacing: float = ROW_SPACING) -> MapLayout:
    """Position every model and build interpolated parent->child edges."""
    if mode not in (MODE_BY_STEP, MODE_BY_OPERATION):
        raise ValueError(f"unknown layout mode {mode!r}")

    columns = _columns(store, mode)
    rows = _rows(store)
    size_scale = _scale_for(store, size_metric, "sqrt_size", RADIUS_RANGE)
    color_scale = _scale_for(store, color_metric, "linear_color", (0.0, 1.0))

    nodes: dict[str, LayoutNode] = {}
    for mid, node in store.nodes.items():
        if size_scale is not None and size_metric in node.metrics:
            radius = size_scale.position(node.metrics[size_metric])
        else:
            radius = RADIUS_RANGE[0]
        if color_scale is not None and color_metric in node.metrics:
            color_value: float | None = color_scale.position(node.metrics[color_metric])
        else:
            color_value = None
        nodes[mid] = LayoutNode(
            column=columns[mid],
            row=rows[mid],
            x=columns[mid] * col_spacing,
            y=rows[mid] * row_spacing,
            radius=radius,
            color_value=color_value,
            disabled=(enabled is not None and mid not in enabled),
        )

    edges: list[LayoutEdge] = []
    for mid, node in store.nodes.items():
        if node.parent_id is None:
            continue
        p, c = nodes[node.parent_id], nodes[mid]
        stops = []
        for i in range(EDGE_STOPS):
            t = i / (EDGE_STOPS - 1)
            width = p.radius + t * (c.radius - p.radius)
            if p.color_value is None or c.color_value is None:
                color = None
            else:
                color = p.color_value + t * (c.color_value - p.color_value)
            stops.append({"t": t, "width": width, "color": color})
        edges.append(LayoutEdge(parent=node.parent_id, child=mid, stops=stops))

    return MapLayout(mode=mode, nodes=nodes, edges=edges,
                     scales={"color": color_scale, "size": size_scale})


def node_tooltip(store: ModelStore, model_id: str) -> list[tuple[str, Any]]:
    """Tooltip rows: every declared metric in spec order, then the operation."""
    node = store.require(model_id)
    rows: list[tuple[str, Any]] = []
    for spec in store.metrics:
        rows.append((spec.name, node.metrics.get(spec.name, "n/a")))
    if node.operation is None:
        rows.append(("operation", "root"))
    else:
        rows.append(("operation", node.operation.describe()))
    return rows
