/** Shared UI state with URL round-tripping.
 *
 * Selection, base model, filters, encodings, and tab all serialize into the
 * location hash so sessions are shareable.  Views subscribe and refetch once
 * per change.
 */

import { MetricFilter } from "./api.js";

export type Tab = "overview" | "behaviors" | "layers";

export interface UiState {
  mode: "by_step" | "by_operation";
  colorMetric: string | null;
  sizeMetric: string | null;
  filters: MetricFilter[];
  selection: string[];          // ordered
  base: string | null;
  tab: Tab;
  comparisonMetric: string;
  relativeMode: "absolute" | "difference" | "pct_error_change";
  groupBy: "group" | "instance";
  layerKind: "weights" | "activations";
  sort: { model: string; mode: "absolute" | "relative"; direction: "asc" | "desc" } | null;
}

export function defaultState(): UiState {
  return {
    mode: "by_step",
    colorMetric: null,
    sizeMetric: null,
    filters: [],
    selection: [],
    base: null,
    tab: "overview",
    comparisonMetric: "accuracy",
    relativeMode: "absolute",
    groupBy: "group",
    layerKind: "weights",
    sort: null,
  };
}

export function encodeState(state: UiState): string {
  const params = new URLSearchParams();
  params.set("mode", state.mode);
  if (state.colorMetric) params.set("color", state.colorMetric);
  if (state.sizeMetric) params.set("size", state.sizeMetric);
  if (state.selection.length) params.set("sel", state.selection.join(","));
  if (state.base) params.set("base", state.base);
  params.set("tab", state.tab);
  params.set("metric", state.comparisonMetric);
  params.set("rel", state.relativeMode);
  params.set("group", state.groupBy);
  params.set("kind", state.layerKind);
  if (state.filters.length) {
    params.set("filters", state.filters
      .map((f) => `${f.metric}:${f.low}:${f.high}`).join(";"));
  }
  if (state.sort) {
    params.set("sort", `${state.sort.model}:${state.sort.mode}:${state.sort.direction}`);
  }
  return params.toString();
}

export function decodeState(hash: string): UiState {
  const state = defaultState();
  const params = new URLSearchParams(hash.replace(/^#/, ""));
  const mode = params.get("mode");
  if (mode === "by_step" || mode === "by_operation") state.mode = mode;
  state.colorMetric = params.get("color");
  state.sizeMetric = params.get("size");
  const sel = params.get("sel");
  if (sel) state.selection = sel.split(",").filter(Boolean);
  state.base = params.get("base");
  const tab = params.get("tab");
  if (tab === "overview" || tab === "behaviors" || tab === "layers") state.tab = tab;
  state.comparisonMetric = params.get("metric") ?? state.comparisonMetric;
  const rel = params.get("rel");
  if (rel === "absolute" || rel === "difference" || rel === "pct_error_change") {
    state.relativeMode = rel;
  }
  const group = params.get("group");
  if (group === "group" || group === "instance") state.groupBy = group;
  const kind = params.get("kind");
  if (kind === "weights" || kind === "activations") state.layerKind = kind;
  const filters = params.get("filters");
  if (filters) {
    state.filters = filters.split(";").flatMap((chunk) => {
      const [metric, low, high] = chunk.split(":");
      const lo = Number(low);
      const hi = Number(high);
      return metric && Number.isFinite(lo) && Number.isFinite(hi)
        ? [{ metric, low: lo, high: hi }] : [];
    });
  }
  const sort = params.get("sort");
  if (sort) {
    const [model, sortMode, direction] = sort.split(":");
    if (model && (sortMode === "absolute" || sortMode === "relative")
        && (direction === "asc" || direction === "desc")) {
      state.sort = { model, mode: sortMode, direction };
    }
  }
  return state;
}

type Listener = (state: UiState) => void;

export class Store {
  private listeners: Listener[] = [];

  constructor(public state: UiState = defaultState()) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  update(patch: Partial<UiState>): void {
    this.state = { ...this.state, ...patch };
    // Base must stay inside the selection outside the overview tab.
    if (this.state.tab !== "overview" && this.state.selection.length) {
      if (!this.state.base || !this.state.selection.includes(this.state.base)) {
        this.state.base = this.state.selection[0];
      }
    }
    for (const listener of [...this.listeners]) listener(this.state);
  }

  syncToUrl(): void {
    if (typeof window !== "undefined") {
      window.history.replaceState(null, "", "#" + encodeState(this.state));
    }
  }

  static fromUrl(): Store {
    const hash = typeof window !== "undefined" ? window.location.hash : "";
    return new Store(decodeState(hash));
  }
}
