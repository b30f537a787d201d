"""Read-only HTTP facade over the engine plus the external provider protocol.

Every endpoint lives under ``/v1`` and returns JSON.  The store is loaded
once at startup and never mutated, so request handling is freely concurrent;
the only shared state is a small synchronized LRU cache in front of the
outputs/layers sources.  Per-model data comes either from static files or
from an external provider process speaking the same JSON shapes over HTTP.
"""

from __future__ import annotations

import json
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import httpx
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import analytics, behaviors, layerdiff, maplayout, variables
from .errors import (
    BadConfig,
    CompressLabError,
    LoadFailure,
    MissingOutput,
    ProviderProtocolViolation,
    ProviderUnavailable,
    UnknownModel,
    http_status,
)
from .store import ModelStore, load_store_file, node_public

PROVIDER_CONCURRENCY = 4


@dataclass
class SessionConfig:
    experiments_path: str
    dataset_path: str | None = None
    outputs_dir: str | None = None
    layers_dir: str | None = None
    provider_url: str | None = None
    port: int = 8077
    cache_size: int = 64

    @classmethod
    def from_file(cls, path: str) -> "SessionConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise BadConfig(f"cannot read config {path!r}: {exc}") from exc
        if "experiments_path" not in raw:
            raise BadConfig("config needs experiments_path")
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})


class _LruCache:
    def __init__(self, capacity: int):
        self._capacity = max(capacity, 1)
        self._data: OrderedDict[Any, Any] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: Any) -> Any | None:
        with self._lock:
            if key not in self._data:
                return None
            self._data.move_to_end(key)
            return self._data[key]

    def put(self, key: Any, value: Any) -> None:
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self._capacity:
                self._data.popitem(last=False)


class DataSource:
    """Outputs and layer summaries, from static files or a provider."""

    def __init__(self, config: SessionConfig, store: ModelStore):
        self._config = config
        self._store = store
        self._cache = _LruCache(config.cache_size)
        self._semaphore = threading.Semaphore(PROVIDER_CONCURRENCY)
        self.provider_hits = 0

    # -- providers ---------------------------------------------------------

    def _provider_post(self, kind: str, payload: dict[str, Any]) -> dict[str, Any]:
        url = f"{self._config.provider_url.rstrip('/')}/{kind}"
        with self._semaphore:
            try:
                response = httpx.post(url, json=payload, timeout=30.0)
                response.raise_for_status()
                body = response.json()
            except (httpx.HTTPError, json.JSONDecodeError) as exc:
                raise ProviderUnavailable(f"provider request failed: {exc}") from exc
        self.provider_hits += 1
        if body.get("model") != payload["model"]:
            raise ProviderProtocolViolation(
                f"provider answered for model {body.get('model')!r}, "
                f"expected {payload['model']!r}")
        if body.get("unknown_ids"):
            raise MissingOutput(
                f"provider does not know instances {body['unknown_ids']!r}",
                detail=body["unknown_ids"])
        return body

    def _read_json(self, directory: str | None, model: str, what: str) -> dict[str, Any]:
        if directory is None:
            raise BadConfig(f"no {what} directory configured and no provider set")
        path = Path(directory) / f"{model}.json"
        if not path.exists():
            raise MissingOutput(f"no {what} file for model {model!r}", detail=model)
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def fetch_outputs(self, model: str,
                      instance_ids: list[str] | None = None) -> dict[str, behaviors.OutputRecord]:
        self._store.require(model)
        key = ("outputs", model, None if instance_ids is None else
               hash(frozenset(instance_ids)))
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        if self._config.provider_url:
            body = self._provider_post("outputs", {
                "model": model, "kind": "outputs", "ids": instance_ids})
        else:
            body = self._read_json(self._config.outputs_dir, model, "outputs")
        records: dict[str, behaviors.OutputRecord] = {}
        for raw in body.get("instances", []):
            record = behaviors.OutputRecord(
                model=model, instance=str(raw["id"]), label=raw.get("label"),
                probs=raw.get("probs"), text=raw.get("text"))
            record.validate()
            records[record.instance] = record
        self._cache.put(key, records)
        return records

    def fetch_layers(self, model: str) -> list[layerdiff.TensorSummary]:
        self._store.require(model)
        key = ("layers", model)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        if self._config.provider_url:
            body = self._provider_post("layers", {
                "model": model, "kind": "layers", "paths": None})
        else:
            body = self._read_json(self._config.layers_dir, model, "layers")
        summaries = layerdiff.parse_layers_document(body)
        self._cache.put(key, summaries)
        return summaries

    def load_instances(self) -> list[behaviors.InstanceRecord]:
        if self._config.dataset_path is None:
            raise BadConfig("no dataset_path configured")
        key = ("dataset",)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        with open(self._config.dataset_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        instances = [
            behaviors.InstanceRecord(
                id=str(raw["id"]), truth=str(raw["truth"]),
                group=raw.get("group"), payload_ref=raw.get("payload_ref"))
            for raw in doc.get("instances", [])
        ]
        self._cache.put(key, instances)
        return instances


# --- request bodies ----------------------------------------------------------

class FilterBody(BaseModel):
    metric: str
    low: float
    high: float


class FiltersRequest(BaseModel):
    filters: list[FilterBody]


class CompareRequest(BaseModel):
    ids: list[str]
    metric: str


class SortSpec(BaseModel):
    model: str
    mode: str = "absolute"       # absolute | relative
    direction: str = "desc"


class BehaviorsRequest(BaseModel):
    ids: list[str]
    metric: str
    base: str | None = None
    relative_mode: str = "absolute"
    group_by: str = "group"      # group | instance
    sort: SortSpec | None = None
    offset: int = 0
    limit: int = 50


class LayersRequest(BaseModel):
    ids: list[str]
    base: str | None = None
    kind: str = "weights"        # weights | activations
    sort: SortSpec | None = None


def _layer_tree_json(node: layerdiff.LayerTreeNode, kind: str) -> dict[str, Any]:
    models: dict[str, Any] = {}
    for model, kinds in sorted(node.summaries.items()):
        summary = kinds.get(kind) or kinds.get(layerdiff.KIND_WEIGHTS)
        if summary is None:
            continue
        entry: dict[str, Any] = {
            "param_count": summary.param_count,
            "zero_count": summary.zero_count,
            "sparsity": summary.sparsity,
        }
        target = kinds.get(kind)
        if target is not None and target.hist is not None:
            entry["hist"] = target.hist.to_json()
        diff = node.diffs.get(model, {}).get(kind)
        if diff is not None:
            entry["diff"] = diff.to_json()
        models[model] = entry
    return {
        "path": node.path,
        "models": models,
        "children": [_layer_tree_json(child, kind) for child in node.children],
    }


def create_app(config: SessionConfig) -> FastAPI:
    try:
        store = load_store_file(config.experiments_path)
    except CompressLabError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadFailure(f"cannot load {config.experiments_path!r}: {exc}") from exc

    source = DataSource(config, store)
    app = FastAPI(title="compresslab", version="1")
    app.state.store = store
    app.state.source = source

    @app.exception_handler(CompressLabError)
    async def engine_error(_request: Request, exc: CompressLabError) -> JSONResponse:
        return JSONResponse(
            status_code=http_status(exc),
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.exception_handler(ValueError)
    async def value_error(_request: Request, exc: ValueError) -> JSONResponse:
        return JSONResponse(status_code=400,
                            content={"code": "BadRequest", "message": str(exc),
                                     "detail": None})

    # -- models -------------------------------------------------------------

    @app.get("/v1/models")
    def list_models() -> dict[str, Any]:
        return {
            "metrics": [
                {"name": m.name, "unit": m.unit, "objective": m.objective,
                 "default_encoding": m.default_encoding}
                for m in store.metrics
            ],
            "models": [node_public(n) for n in store.nodes.values()],
        }

    @app.get("/v1/models/{model_id}")
    def get_model(model_id: str) -> dict[str, Any]:
        node = store.require(model_id)
        return {
            **node_public(node),
            "depth": store.depth(model_id),
            "tooltip": [[label, value]
                        for label, value in maplayout.node_tooltip(store, model_id)],
        }

    # -- overview -----------------------------------------------------------

    @app.get("/v1/layout")
    def layout(mode: str = maplayout.MODE_BY_STEP, color: str | None = None,
               size: str | None = None, col_spacing: float = maplayout.COL_SPACING,
               row_spacing: float = maplayout.ROW_SPACING) -> dict[str, Any]:
        color = color or next(
            (m.name for m in store.metrics if m.default_encoding == "color"), None)
        size = size or next(
            (m.name for m in store.metrics if m.default_encoding == "size"), None)
        result = maplayout.compute_layout(store, mode, color, size,
                                          col_spacing=col_spacing,
                                          row_spacing=row_spacing)
        return result.to_json()

    @app.get("/v1/metrics/{name}/histogram")
    def histogram(name: str, bins: int = 10) -> dict[str, Any]:
        hist = analytics.metric_histogram(store, name, bins)
        return {"metric": hist.metric, "edges": hist.edges, "counts": hist.counts,
                "model_bins": hist.model_bins}

    @app.post("/v1/filters")
    def filters(body: FiltersRequest) -> dict[str, Any]:
        parsed = [analytics.MetricFilter(f.metric, f.low, f.high) for f in body.filters]
        enabled = analytics.apply_filters(store, parsed)
        return {"enabled": sorted(enabled, key=list(store.nodes).index)}

    @app.get("/v1/pareto")
    def pareto(x: str, y: str) -> dict[str, Any]:
        return {"front": analytics.pareto_front(store, x, y)}

    # -- comparison ----------------------------------------------------------

    @app.post("/v1/selection/compare")
    def compare(body: CompareRequest) -> dict[str, Any]:
        result = variables.build_comparison(store, body.ids, body.metric)
        return result.to_json()

    @app.post("/v1/behaviors")
    def behaviors_rows(body: BehaviorsRequest) -> dict[str, Any]:
        for mid in body.ids:
            store.require(mid)
        base = body.base or behaviors.default_base(body.ids, store)
        if base not in body.ids:
            raise UnknownModel(f"base {base!r} is not in the selection", detail=base)
        spec = behaviors.ComparisonMetricSpec(body.metric, body.relative_mode)
        instances = source.load_instances()
        outputs = {mid: source.fetch_outputs(mid) for mid in body.ids}
        values = {
            mid: behaviors.eval_metric(spec, outputs[mid], outputs[base], instances)
            for mid in body.ids
        }
        rows = behaviors.aggregate_rows(values, instances, body.group_by, base,
                                        body.relative_mode)
        if body.sort is not None:
            rows = behaviors.sort_rows(rows, (body.sort.model, body.sort.mode),
                                       body.sort.direction)
        page = rows[body.offset:body.offset + body.limit]
        return {
            "base": base,
            "total": len(rows),
            "offset": body.offset,
            "limit": body.limit,
            "rows": [r.to_json() for r in page],
        }

    @app.post("/v1/layers")
    def layers(body: LayersRequest) -> dict[str, Any]:
        for mid in body.ids:
            store.require(mid)
        base = body.base or behaviors.default_base(body.ids, store)
        if base not in body.ids:
            raise UnknownModel(f"base {base!r} is not in the selection", detail=base)
        summaries = {mid: source.fetch_layers(mid) for mid in body.ids}
        tree = layerdiff.build_layer_tree(summaries)
        layerdiff.attach_diffs(tree, base, body.kind)
        ranking: dict[str, list[Any]] = {}
        if body.sort is not None:
            ranked = layerdiff.rank_layers(tree, body.sort.model, body.kind)
            if body.sort.direction == "asc":
                ranked = ranked[::-1]
            ranking[body.sort.model] = [[path, score] for path, score in ranked]
        return {
            "base": base,
            "kind": body.kind,
            "tree": _layer_tree_json(tree, body.kind),
            "ranking": ranking,
        }

    return app


def serve(config: SessionConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host="127.0.0.1", port=config.port, log_level="warning")
