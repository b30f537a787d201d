"""Metric histograms, budget filters, and Pareto fronts.

Pure functions over an immutable store; everything here backs the Filter
view and the Model Scatterplot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import NoValues, UnknownMetric
from .store import ModelStore


@dataclass
class MetricHistogram:
    metric: str
    edges: list[float]            # k+1 ascending bin edges
    counts: list[int]             # k bin counts
    model_bins: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class MetricFilter:
    metric: str
    low: float
    high: float

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"filter on {self.metric!r}: low {self.low} > high {self.high}")


def metric_histogram(store: ModelStore, metric: str, bins: int) -> MetricHistogram:
    """Equal-width histogram over the observed values of one metric.

    The maximum value lands in the last bin.  When every model reports the
    same value the histogram degenerates to a single [v, v+1] bin.
    """
    if bins < 1:
        raise ValueError("bins must be a positive integer")
    values = store.values_for(metric)
    if not values:
        raise NoValues(f"no model carries metric {metric!r}", detail=metric)

    lo = min(values.values())
    hi = max(values.values())
    if lo == hi:
        edges = [lo, lo + 1.0]
        counts = [len(values)]
        model_bins = {mid: 0 for mid in values}
        return MetricHistogram(metric, edges, counts, model_bins)

    width = (hi - lo) / bins
    edges = [lo + i * width for i in range(bins)] + [hi]
    counts = [0] * bins
    model_bins: dict[str, int] = {}
    for mid, v in values.items():
        b = min(int((v - lo) / width), bins - 1)
        # Guard against float rounding at bin boundaries.
        while b > 0 and v < edges[b]:
            b -= 1
        while b < bins - 1 and v > edges[b + 1]:
            b += 1
        counts[b] += 1
        model_bins[mid] = b
    return MetricHistogram(metric, edges, counts, model_bins)


def apply_filters(store: ModelStore, filters: list[MetricFilter]) -> set[str]:
    """Ids of models satisfying every filter (conjunction).

    Models missing a filtered metric are disabled; an empty filter list
    enables everything.
    """
    for f in filters:
        if f.metric not in store.metric_specs:
            raise UnknownMetric(f"unknown metric {f.metric!r}", detail=f.metric)
    enabled: set[str] = set()
    for mid, node in store.nodes.items():
        ok = True
        for f in filters:
            v = node.metrics.get(f.metric)
            if v is None or not (f.low <= v <= f.high):
                ok = False
                break
        if ok:
            enabled.add(mid)
    return enabled


def _better(a: float, b: float, objective: str) -> bool:
    return a > b if objective == "maximize" else a < b


def pareto_front(store: ModelStore, x_metric: str, y_metric: str) -> list[str]:
    """Non-dominated models under the two metrics' declared objectives.

    Models missing either metric do not participate.  Ties are kept; the
    result is sorted by x value (then id, for determinism).
    """
    for metric in (x_metric, y_metric):
        if metric not in store.metric_specs:
            raise UnknownMetric(f"unknown metric {metric!r}", detail=metric)
    obj_x = store.metric_specs[x_metric].objective
    obj_y = store.metric_specs[y_metric].objective

    points = [
        (mid, node.metrics[x_metric], node.metrics[y_metric])
        for mid, node in store.nodes.items()
        if x_metric in node.metrics and y_metric in node.metrics
    ]

    front = []
    for mid, x, y in points:
        dominated = False
        for omid, ox, oy in points:
            if omid == mid:
                continue
            no_worse = (not _better(x, ox, obj_x)) and (not _better(y, oy, obj_y))
            strictly = _better(ox, x, obj_x) or _better(oy, y, obj_y)
            if no_worse and strictly:
                dominated = True
                break
        if not dominated:
            front.append((mid, x, y))
    front.sort(key=lambda t: (t[1], t[0]))
    return [mid for mid, _, _ in front]
