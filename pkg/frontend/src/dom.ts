/** Small DOM/SVG helpers; no framework. */

const SVG_NS = "http://www.w3.org/2000/svg";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function svg(tag: string, attrs: Record<string, string | number> = {}): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, String(value));
  }
  return node;
}

export function clear(node: Element): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

/** Sequential colormap (viridis-like, 5 stops) over t in [0, 1]. */
export function sequentialColor(t: number | null): string {
  if (t === null) return "#cccccc";
  const stops: [number, number, number][] = [
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
  ];
  const clamped = Math.min(Math.max(t, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(clamped), stops.length - 2);
  const frac = clamped - i;
  const mix = stops[i].map((a, k) => Math.round(a + frac * (stops[i + 1][k] - a)));
  return `rgb(${mix[0]},${mix[1]},${mix[2]})`;
}

/** Diverging colormap for relative values: blue (negative) to red (positive). */
export function divergingColor(t: number): string {
  const clamped = Math.min(Math.max(t, -1), 1);
  if (clamped < 0) {
    const k = 1 + clamped;
    return `rgb(${Math.round(49 + k * 198)},${Math.round(98 + k * 149)},255)`;
  }
  const k = 1 - clamped;
  return `rgb(255,${Math.round(59 + k * 188)},${Math.round(48 + k * 199)})`;
}
