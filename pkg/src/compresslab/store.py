"""Experiment store: a validated forest of models and the operations that
produced them.

Each experiment file describes a set of trees.  Nodes are models; an edge is
the compression operation applied to the parent to obtain the child.  The
store is immutable after loading, so readers never need locks; reloading a
file swaps in a whole new store.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import (
    ChildWithoutOperation,
    CycleDetected,
    DuplicateId,
    InvalidMetricValue,
    RootWithOperation,
    SchemaError,
    UndeclaredMetric,
    UnknownModel,
    UnknownParent,
)

SCHEMA_VERSION = 1

Scalar = bool | int | float | str


def format_scalar(value: Scalar) -> str:
    """Render a parameter or metric scalar the way the UI shows it.

    Booleans use JSON spelling, floats drop trailing noise (0.5 -> "0.5").
    """
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


@dataclass(frozen=True)
class Operation:
    """A named operation with ordered scalar parameters."""

    name: str
    parameters: dict[str, Scalar] = field(default_factory=dict)

    def signature(self) -> str:
        """Canonical identity: name plus parameters as sorted-key JSON."""
        return self.name + json.dumps(self.parameters, sort_keys=True, separators=(",", ":"))

    def describe(self) -> str:
        """Human-readable form, e.g. ``prune(sparsity=0.5)``."""
        args = ", ".join(f"{k}={format_scalar(v)}" for k, v in self.parameters.items())
        return f"{self.name}({args})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Operation):
            return NotImplemented
        return self.signature() == other.signature()

    def __hash__(self) -> int:
        return hash(self.signature())


@dataclass(frozen=True)
class MetricSpec:
    name: str
    unit: str = ""
    objective: str = "maximize"  # or "minimize"
    default_encoding: str | None = None  # "color" | "size" | "none"


@dataclass
class ModelNode:
    id: str
    parent_id: str | None = None
    operation: Operation | None = None
    metrics: dict[str, float] = field(default_factory=dict)
    tags: list[str] = field(default_factory=list)


class ModelStore:
    """Validated, immutable forest of model nodes.

    Iteration order of ``nodes`` follows the document order, which makes
    every downstream computation deterministic.
    """

    def __init__(self, metrics: list[MetricSpec], nodes: list[ModelNode]):
        self.metrics: list[MetricSpec] = list(metrics)
        self.metric_specs: dict[str, MetricSpec] = {m.name: m for m in metrics}
        self.nodes: dict[str, ModelNode] = {}
        self.roots: list[str] = []
        self.children: dict[str, list[str]] = {}
        self._depth: dict[str, int] = {}
        self._validate_and_index(nodes)

    # -- validation ---------------------------------------------------------

    def _validate_and_index(self, nodes: list[ModelNode]) -> None:
        if len(self.metric_specs) != len(self.metrics):
            raise SchemaError("metric names must be unique")
        for enc in ("color", "size"):
            holders = [m.name for m in self.metrics if m.default_encoding == enc]
            if len(holders) > 1:
                raise SchemaError(f"more than one metric defaults to {enc}: {holders}")

        for node in nodes:
            if node.id in self.nodes:
                raise DuplicateId(f"duplicate model id {node.id!r}", detail=node.id)
            if (node.operation is None) != (node.parent_id is None):
                if node.operation is not None:
                    raise RootWithOperation(
                        f"model {node.id!r} has an operation but no parent", detail=node.id)
                raise ChildWithoutOperation(
                    f"model {node.id!r} has a parent but no operation", detail=node.id)
            if node.operation is not None and not node.operation.name:
                raise SchemaError(f"model {node.id!r} has an empty operation name")
            for name, value in node.metrics.items():
                if name not in self.metric_specs:
                    raise UndeclaredMetric(
                        f"model {node.id!r} reports undeclared metric {name!r}", detail=node.id)
                if not isinstance(value, (int, float)) or isinstance(value, bool) \
                        or not math.isfinite(value):
                    raise InvalidMetricValue(
                        f"model {node.id!r} metric {name!r} is not a finite number",
                        detail=node.id)
            self.nodes[node.id] = node
            self.children.setdefault(node.id, [])

        for node in nodes:
            if node.parent_id is None:
                self.roots.append(node.id)
            else:
                if node.parent_id not in self.nodes:
                    raise UnknownParent(
                        f"model {node.id!r} references unknown parent {node.parent_id!r}",
                        detail=node.id)
                self.children[node.parent_id].append(node.id)

        # Parent chains must terminate at a root; a revisit means a cycle.
        state: dict[str, int] = {}  # 0 = in progress, 1 = done
        for node in nodes:
            chain = []
            cur: str | None = node.id
            while cur is not None and cur not in state:
                state[cur] = 0
                chain.append(cur)
                cur = self.nodes[cur].parent_id
            if cur is not None and state[cur] == 0:
                raise CycleDetected(f"model {cur!r} is part of a parent cycle", detail=cur)
            for cid in chain:
                state[cid] = 1

        for root in self.roots:
            self._assign_depths(root)

    def _assign_depths(self, root: str) -> None:
        stack = [(root, 0)]
        while stack:
            node_id, depth = stack.pop()
            self._depth[node_id] = depth
            for child in self.children[node_id]:
                stack.append((child, depth + 1))

    # -- queries ------------------------------------------------------------

    def __contains__(self, model_id: str) -> bool:
        return model_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def require(self, model_id: str) -> ModelNode:
        try:
            return self.nodes[model_id]
        except KeyError:
            raise UnknownModel(f"unknown model {model_id!r}", detail=model_id) from None

    def depth(self, model_id: str) -> int:
        self.require(model_id)
        return self._depth[model_id]

    def metric_names(self) -> list[str]:
        return [m.name for m in self.metrics]

    def values_for(self, metric: str) -> dict[str, float]:
        """Model id -> value for every node that carries the metric."""
        if metric not in self.metric_specs:
            from .errors import UnknownMetric
            raise UnknownMetric(f"unknown metric {metric!r}", detail=metric)
        return {mid: n.metrics[metric] for mid, n in self.nodes.items() if metric in n.metrics}


def op_path(store: ModelStore, model_id: str) -> list[Operation]:
    """Operations along the root -> model path, root end first."""
    node = store.require(model_id)
    ops: list[Operation] = []
    while node.parent_id is not None:
        assert node.operation is not None
        ops.append(node.operation)
        node = store.nodes[node.parent_id]
    ops.reverse()
    return ops


def select_descendants(store: ModelStore, model_id: str, include_self: bool = False) -> set[str]:
    """Ids of every model below ``model_id`` (optionally including it)."""
    store.require(model_id)
    out: set[str] = {model_id} if include_self else set()
    queue = list(store.children[model_id])
    while queue:
        cur = queue.pop()
        out.add(cur)
        queue.extend(store.children[cur])
    return out


# -- (de)serialization -------------------------------------------------------

def _parse_operation(raw: Any, model_id: str) -> Operation | None:
    if raw is None:
        return None
    if not isinstance(raw, dict) or "name" not in raw:
        raise SchemaError(f"model {model_id!r} operation must be an object with a name")
    params = raw.get("parameters", {}) or {}
    if not isinstance(params, dict):
        raise SchemaError(f"model {model_id!r} operation parameters must be an object")
    for key, value in params.items():
        if not isinstance(value, (bool, int, float, str)):
            raise SchemaError(
                f"model {model_id!r} operation parameter {key!r} must be a scalar")
    return Operation(name=str(raw["name"]), parameters=dict(params))


def load_store(document: dict[str, Any]) -> ModelStore:
    """Build a validated store from a parsed experiments.json document."""
    if not isinstance(document, dict):
        raise SchemaError("experiment document must be a JSON object")
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}")

    metrics = []
    for raw in document.get("metrics", []):
        try:
            metrics.append(MetricSpec(
                name=str(raw["name"]),
                unit=str(raw.get("unit", "")),
                objective=str(raw.get("objective", "maximize")),
                default_encoding=raw.get("default_encoding"),
            ))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad metric spec: {raw!r}") from exc
        if metrics[-1].objective not in ("maximize", "minimize"):
            raise SchemaError(f"metric {metrics[-1].name!r} objective must be maximize|minimize")

    nodes = []
    for raw in document.get("models", []):
        if not isinstance(raw, dict) or "id" not in raw:
            raise SchemaError(f"model entry must be an object with an id: {raw!r}")
        model_id = str(raw["id"])
        nodes.append(ModelNode(
            id=model_id,
            parent_id=raw.get("parent"),
            operation=_parse_operation(raw.get("operation"), model_id),
            metrics=dict(raw.get("metrics", {}) or {}),
            tags=list(raw.get("tags", []) or []),
        ))
    return ModelStore(metrics, nodes)


def load_store_file(path: str) -> ModelStore:
    with open(path, "r", encoding="utf-8") as fh:
        return load_store(json.load(fh))


def serialize(store: ModelStore) -> dict[str, Any]:
    """Inverse of load_store; emits the normative experiments.json shape."""
    return {
        "schema_version": SCHEMA_VERSION,
        "metrics": [
            {
                "name": m.name,
                "unit": m.unit,
                "objective": m.objective,
                "default_encoding": m.default_encoding,
            }
            for m in store.metrics
        ],
        "models": [
            {
                "id": n.id,
                "parent": n.parent_id,
                "operation": None if n.operation is None else {
                    "name": n.operation.name,
                    "parameters": dict(n.operation.parameters),
                },
                "metrics": dict(n.metrics),
                "tags": list(n.tags),
            }
            for n in store.nodes.values()
        ],
    }


def node_public(node: ModelNode) -> dict[str, Any]:
    """JSON view of one model as served by the API."""
    return {
        "id": node.id,
        "parent": node.parent_id,
        "operation": None if node.operation is None else {
            "name": node.operation.name,
            "parameters": dict(node.operation.parameters),
        },
        "metrics": dict(node.metrics),
        "tags": list(node.tags),
    }
