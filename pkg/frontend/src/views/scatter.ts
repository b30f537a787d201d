/** Model Scatterplot: two metric axes, shared encodings with the map,
 * rectangular brush selection, optional Pareto-front overlay. */

import { LayoutResponse, ModelEntry } from "../api.js";
import { clear, sequentialColor, svg } from "../dom.js";
import { formatNumber } from "../format.js";

const WIDTH = 420;
const HEIGHT = 320;
const MARGIN = 42;

export interface ScatterCallbacks {
  onBrush(ids: string[]): void;
}

export class ScatterView {
  constructor(private root: HTMLElement, private callbacks: ScatterCallbacks) {}

  render(models: ModelEntry[], layout: LayoutResponse | null,
         xMetric: string, yMetric: string, selection: string[],
         front: string[] | null): void {
    clear(this.root);
    const points = models.filter(
      (m) => xMetric in m.metrics && yMetric in m.metrics);
    if (!points.length) return;

    const xs = points.map((m) => m.metrics[xMetric]);
    const ys = points.map((m) => m.metrics[yMetric]);
    const xLo = Math.min(...xs);
    const xHi = Math.max(...xs);
    const yLo = Math.min(...ys);
    const yHi = Math.max(...ys);
    const sx = (v: number) => MARGIN +
      (xHi === xLo ? 0.5 : (v - xLo) / (xHi - xLo)) * (WIDTH - 2 * MARGIN);
    const sy = (v: number) => HEIGHT - MARGIN -
      (yHi === yLo ? 0.5 : (v - yLo) / (yHi - yLo)) * (HEIGHT - 2 * MARGIN);

    const canvas = svg("svg", {
      class: "scatter", viewBox: `0 0 ${WIDTH} ${HEIGHT}`, width: "100%",
    });

    const axis = svg("g", { class: "axes" });
    axis.appendChild(svg("line", {
      x1: MARGIN, y1: HEIGHT - MARGIN, x2: WIDTH - MARGIN, y2: HEIGHT - MARGIN,
      stroke: "#999",
    }));
    axis.appendChild(svg("line", {
      x1: MARGIN, y1: MARGIN, x2: MARGIN, y2: HEIGHT - MARGIN, stroke: "#999",
    }));
    for (const [value, xpos] of [[xLo, sx(xLo)], [xHi, sx(xHi)]] as const) {
      const tick = svg("text", {
        x: xpos, y: HEIGHT - MARGIN + 14, "text-anchor": "middle",
        class: "tick",
      });
      tick.textContent = formatNumber(value);
      axis.appendChild(tick);
    }
    for (const [value, ypos] of [[yLo, sy(yLo)], [yHi, sy(yHi)]] as const) {
      const tick = svg("text", {
        x: MARGIN - 6, y: ypos + 3, "text-anchor": "end", class: "tick",
      });
      tick.textContent = formatNumber(value);
      axis.appendChild(tick);
    }
    canvas.appendChild(axis);

    if (front && front.length) {
      const overlay = svg("polyline", {
        points: front
          .filter((id) => points.some((m) => m.id === id))
          .map((id) => {
            const m = points.find((p) => p.id === id)!;
            return `${sx(m.metrics[xMetric])},${sy(m.metrics[yMetric])}`;
          })
          .join(" "),
        fill: "none",
        stroke: "#ff3b30",
        "stroke-width": 1.2,
        class: "pareto-front",
      });
      canvas.appendChild(overlay);
    }

    const selected = new Set(selection);
    for (const m of points) {
      const node = layout?.nodes[m.id];
      const circle = svg("circle", {
        cx: sx(m.metrics[xMetric]),
        cy: sy(m.metrics[yMetric]),
        r: node ? node.radius * 0.55 : 5,
        fill: sequentialColor(node ? node.color_value : null),
        stroke: selected.has(m.id) ? "#ff3b30" : "#333",
        "stroke-width": selected.has(m.id) ? 2 : 0.7,
        opacity: node?.disabled ? 0.25 : 1,
        "data-model": m.id,
        class: "scatter-node",
      });
      canvas.appendChild(circle);
    }

    // Rectangular brush: pointerdown-drag-up selects enabled points inside.
    let origin: { x: number; y: number } | null = null;
    let rect: SVGElement | null = null;
    const toLocal = (event: PointerEvent): { x: number; y: number } => {
      const bounds = (canvas as unknown as SVGGraphicsElement).getBoundingClientRect();
      const width = bounds.width || WIDTH;
      const height = bounds.height || HEIGHT;
      return {
        x: ((event.clientX - bounds.left) / width) * WIDTH,
        y: ((event.clientY - bounds.top) / height) * HEIGHT,
      };
    };
    canvas.addEventListener("pointerdown", (event) => {
      origin = toLocal(event as PointerEvent);
      rect = svg("rect", { class: "brush", fill: "rgba(0,122,255,0.15)",
        stroke: "#007aff" });
      canvas.appendChild(rect);
    });
    canvas.addEventListener("pointermove", (event) => {
      if (!origin || !rect) return;
      const here = toLocal(event as PointerEvent);
      rect.setAttribute("x", String(Math.min(origin.x, here.x)));
      rect.setAttribute("y", String(Math.min(origin.y, here.y)));
      rect.setAttribute("width", String(Math.abs(here.x - origin.x)));
      rect.setAttribute("height", String(Math.abs(here.y - origin.y)));
    });
    canvas.addEventListener("pointerup", (event) => {
      if (!origin) return;
      const here = toLocal(event as PointerEvent);
      const x0 = Math.min(origin.x, here.x);
      const x1 = Math.max(origin.x, here.x);
      const y0 = Math.min(origin.y, here.y);
      const y1 = Math.max(origin.y, here.y);
      const ids = points
        .filter((m) => !(layout?.nodes[m.id]?.disabled))
        .filter((m) => {
          const px = sx(m.metrics[xMetric]);
          const py = sy(m.metrics[yMetric]);
          return x0 <= px && px <= x1 && y0 <= py && py <= y1;
        })
        .map((m) => m.id);
      this.callbacks.onBrush(ids);
      origin = null;
      if (rect) { rect.remove(); rect = null; }
    });

    this.root.appendChild(canvas);
  }
}
