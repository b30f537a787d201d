"""Static report rendering: the Model Map, metric histograms, the
size/accuracy scatterplot with its Pareto front, and a comparison chart are
written as PNG files next to a delimited model table.

This is the offline companion to the interactive UI; handy for sharing
results or eyeballing a fixture without starting the service.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib import colormaps, colors
from matplotlib.cm import ScalarMappable

from . import analytics, maplayout, variables
from .store import ModelStore

MAP_CMAP = "viridis"


def render_model_map(store: ModelStore, layout: maplayout.MapLayout, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(9, 6))
    cmap = colormaps[MAP_CMAP]

    for edge in layout.edges:
        p = layout.nodes[edge.parent]
        c = layout.nodes[edge.child]
        stops = edge.stops
        for a, b in zip(stops, stops[1:]):
            xa = p.x + a["t"] * (c.x - p.x)
            ya = p.y + a["t"] * (c.y - p.y)
            xb = p.x + b["t"] * (c.x - p.x)
            yb = p.y + b["t"] * (c.y - p.y)
            color = cmap(a["color"]) if a["color"] is not None else "lightgray"
            ax.plot([xa, xb], [ya, yb], color=color,
                    linewidth=max(a["width"] * 0.25, 0.5), zorder=1,
                    solid_capstyle="round")

    for mid, node in layout.nodes.items():
        face = cmap(node.color_value) if node.color_value is not None else "lightgray"
        alpha = 0.25 if node.disabled else 1.0
        ax.scatter([node.x], [node.y], s=node.radius ** 2, c=[face], alpha=alpha,
                   edgecolors="black", linewidths=0.5, zorder=2)
        ax.annotate(mid, (node.x, node.y), textcoords="offset points",
                    xytext=(0, node.radius + 2), ha="center", fontsize=6)

    scale = layout.scales.get("color")
    if scale is not None:
        norm = colors.Normalize(vmin=scale.domain[0], vmax=scale.domain[1])
        fig.colorbar(ScalarMappable(norm=norm, cmap=cmap), ax=ax,
                     label=scale.metric, shrink=0.7)
    ax.invert_yaxis()
    ax.set_axis_off()
    ax.set_title(f"Model Map ({layout.mode})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_histograms(store: ModelStore, bins: int, path: Path) -> Path:
    metric_names = store.metric_names()
    fig, axes = plt.subplots(1, len(metric_names), figsize=(3.2 * len(metric_names), 2.8))
    if len(metric_names) == 1:
        axes = [axes]
    for ax, name in zip(axes, metric_names):
        try:
            hist = analytics.metric_histogram(store, name, bins)
        except Exception:
            ax.set_visible(False)
            continue
        widths = [b - a for a, b in zip(hist.edges, hist.edges[1:])]
        ax.bar(hist.edges[:-1], hist.counts, width=widths, align="edge",
               color="steelblue", edgecolor="white")
        ax.set_title(name, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_scatter(store: ModelStore, x_metric: str, y_metric: str, path: Path) -> Path:
    front = analytics.pareto_front(store, x_metric, y_metric)
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    xs, ys, labels = [], [], []
    for mid, node in store.nodes.items():
        if x_metric in node.metrics and y_metric in node.metrics:
            xs.append(node.metrics[x_metric])
            ys.append(node.metrics[y_metric])
            labels.append(mid)
    ax.scatter(xs, ys, c="lightgray", edgecolors="black", linewidths=0.4, s=28)
    fx = [store.nodes[m].metrics[x_metric] for m in front]
    fy = [store.nodes[m].metrics[y_metric] for m in front]
    ax.plot(fx, fy, "o-", color="crimson", markersize=5, linewidth=1.2,
            label="Pareto front")
    ax.set_xlabel(x_metric)
    ax.set_ylabel(y_metric)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_comparison(chart: variables.ChartSpec, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    x_values = chart.x_variable.values if chart.x_variable else \
        [bar.x for bar in chart.bars]
    color_values = chart.color_variable.values if chart.color_variable else [None]
    cmap = colormaps["tab10"]
    group_width = 0.8
    bar_width = group_width / max(len(color_values), 1)

    for ci, cval in enumerate(color_values):
        xs, hs = [], []
        for bar in chart.bars:
            if (bar.color or None) != cval:
                continue
            xi = x_values.index(bar.x)
            xs.append(xi - group_width / 2 + (ci + 0.5) * bar_width)
            hs.append(bar.value)
        label = str(cval) if cval is not None else None
        ax.bar(xs, hs, width=bar_width * 0.92, color=cmap(ci % 10), label=label)

    ax.set_xticks(range(len(x_values)))
    ax.set_xticklabels([str(v) for v in x_values], rotation=20, ha="right", fontsize=8)
    if chart.x_variable is not None:
        ax.set_xlabel(chart.x_variable.label)
    ax.set_ylabel(chart.metric)
    if chart.color_variable is not None:
        ax.legend(title=chart.color_variable.label, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_model_table(store: ModelStore, path: Path) -> Path:
    metric_names = store.metric_names()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "parent", "operation"] + metric_names + ["tags"])
        for node in store.nodes.values():
            op = node.operation.describe() if node.operation else "root"
            writer.writerow(
                [node.id, node.parent_id or "", op]
                + [node.metrics.get(m, "") for m in metric_names]
                + [";".join(node.tags)])
    return path


def generate_report(store: ModelStore, out_dir: str | Path, mode: str = "by_operation",
                    bins: int = 10, selection: list[str] | None = None,
                    metric: str | None = None) -> list[Path]:
    """Render every figure plus the model table into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    color = next((m.name for m in store.metrics if m.default_encoding == "color"), None)
    size = next((m.name for m in store.metrics if m.default_encoding == "size"), None)

    written = [write_model_table(store, out / "models.csv")]
    layout = maplayout.compute_layout(store, mode, color, size)
    written.append(render_model_map(store, layout, out / "model_map.png"))
    written.append(render_histograms(store, bins, out / "metric_histograms.png"))
    if size is not None and color is not None:
        written.append(render_scatter(store, size, color, out / "scatterplot.png"))

    if selection:
        chart_metric = metric or color or store.metric_names()[0]
        result = variables.build_comparison(store, selection, chart_metric)
        if result.chart is not None:
            written.append(render_comparison(result.chart, out / "comparison.png"))
    return written
