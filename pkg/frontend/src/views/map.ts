/** Model Map: node-link tree with size/color encodings.
 *
 * Disabled (filtered-out) models render semitransparent and ignore clicks.
 * Click selects, shift-click selects the node's whole subtree (derived from
 * the layout's parent/child edges), ctrl/meta-click toggles membership.
 */

import { LayoutResponse, ModelDetail } from "../api.js";
import { clear, el, sequentialColor, svg } from "../dom.js";
import { formatNumber } from "../format.js";

export interface MapCallbacks {
  onSelect(ids: string[], extend: boolean): void;
  fetchDetail(id: string): Promise<ModelDetail>;
}

export class ModelMapView {
  private tooltip: HTMLElement;

  constructor(private root: HTMLElement, private callbacks: MapCallbacks) {
    this.tooltip = el("div", { class: "tooltip", style: "display:none" });
    this.root.appendChild(this.tooltip);
  }

  descendantsOf(layout: LayoutResponse, id: string): string[] {
    const children = new Map<string, string[]>();
    for (const edge of layout.edges) {
      const list = children.get(edge.parent) ?? [];
      list.push(edge.child);
      children.set(edge.parent, list);
    }
    const out: string[] = [];
    const queue = [id];
    while (queue.length) {
      const current = queue.shift()!;
      out.push(current);
      queue.push(...(children.get(current) ?? []));
    }
    return out;
  }

  render(layout: LayoutResponse, selection: string[]): void {
    clear(this.root);
    this.root.appendChild(this.tooltip);
    const selected = new Set(selection);

    const nodes = Object.entries(layout.nodes);
    const maxX = Math.max(...nodes.map(([, n]) => n.x), 0);
    const maxY = Math.max(...nodes.map(([, n]) => n.y), 0);
    const pad = 40;
    const canvas = svg("svg", {
      class: "model-map",
      viewBox: `${-pad} ${-pad} ${maxX + 2 * pad} ${maxY + 2 * pad}`,
      width: "100%",
    });

    for (const edge of layout.edges) {
      const a = layout.nodes[edge.parent];
      const b = layout.nodes[edge.child];
      for (let i = 0; i + 1 < edge.stops.length; i++) {
        const s = edge.stops[i];
        const next = edge.stops[i + 1];
        const line = svg("line", {
          x1: a.x + s.t * (b.x - a.x),
          y1: a.y + s.t * (b.y - a.y),
          x2: a.x + next.t * (b.x - a.x),
          y2: a.y + next.t * (b.y - a.y),
          stroke: sequentialColor(s.color),
          "stroke-width": Math.max(s.width * 0.25, 0.75),
          "stroke-linecap": "round",
        });
        canvas.appendChild(line);
      }
    }

    for (const [id, node] of nodes) {
      const circle = svg("circle", {
        cx: node.x,
        cy: node.y,
        r: node.radius,
        fill: sequentialColor(node.color_value),
        stroke: selected.has(id) ? "#ff3b30" : "#333",
        "stroke-width": selected.has(id) ? 2.5 : 0.8,
        opacity: node.disabled ? 0.25 : 1,
        "data-model": id,
        "data-disabled": String(node.disabled),
        class: "map-node",
      });
      if (!node.disabled) {
        circle.addEventListener("click", (event: Event) => {
          const mouse = event as MouseEvent;
          if (mouse.shiftKey) {
            const subtree = this.descendantsOf(layout, id)
              .filter((mid) => !layout.nodes[mid].disabled);
            this.callbacks.onSelect(subtree, false);
          } else {
            this.callbacks.onSelect([id], mouse.ctrlKey || mouse.metaKey);
          }
        });
        circle.addEventListener("mouseenter", () => void this.showTooltip(id, node.x, node.y));
        circle.addEventListener("mouseleave", () => this.hideTooltip());
      }
      canvas.appendChild(circle);
      const label = svg("text", {
        x: node.x,
        y: node.y - node.radius - 3,
        "text-anchor": "middle",
        class: "map-label",
      });
      label.textContent = id;
      canvas.appendChild(label);
    }
    this.root.appendChild(canvas);
  }

  private async showTooltip(id: string, x: number, y: number): Promise<void> {
    const detail = await this.callbacks.fetchDetail(id);
    clear(this.tooltip);
    const table = el("table");
    for (const [label, value] of detail.tooltip) {
      const row = el("tr");
      row.appendChild(el("td", { class: "tooltip-label" }, label));
      row.appendChild(el("td", {},
        typeof value === "number" ? formatNumber(value) : String(value)));
      table.appendChild(row);
    }
    this.tooltip.appendChild(table);
    this.tooltip.style.display = "block";
    this.tooltip.style.left = `${x + 12}px`;
    this.tooltip.style.top = `${y + 12}px`;
  }

  private hideTooltip(): void {
    this.tooltip.style.display = "none";
  }
}
