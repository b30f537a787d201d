/** Typed client for the compresslab /v1 API.
 *
 * Every response passes through `captured`, which tests use to assert that
 * no number shown in the UI was computed locally.
 */

export interface MetricSpec {
  name: string;
  unit: string;
  objective: "maximize" | "minimize";
  default_encoding: "color" | "size" | "none" | null;
}

export interface ModelEntry {
  id: string;
  parent: string | null;
  operation: { name: string; parameters: Record<string, unknown> } | null;
  metrics: Record<string, number>;
  tags: string[];
}

export interface ModelsResponse {
  metrics: MetricSpec[];
  models: ModelEntry[];
}

export interface ModelDetail extends ModelEntry {
  depth: number;
  tooltip: [string, number | string][];
}

export interface LayoutNode {
  column: number;
  row: number;
  x: number;
  y: number;
  radius: number;
  color_value: number | null;
  disabled: boolean;
}

export interface EdgeStop {
  t: number;
  width: number;
  color: number | null;
}

export interface LayoutEdge {
  parent: string;
  child: string;
  stops: EdgeStop[];
}

export interface EncodingScale {
  metric: string;
  domain: [number, number];
  range: [number, number];
  kind: string;
}

export interface LayoutResponse {
  mode: string;
  nodes: Record<string, LayoutNode>;
  edges: LayoutEdge[];
  scales: { color: EncodingScale | null; size: EncodingScale | null };
}

export interface HistogramResponse {
  metric: string;
  edges: number[];
  counts: number[];
  model_bins: Record<string, number>;
}

export interface MetricFilter {
  metric: string;
  low: number;
  high: number;
}

export interface VariableSpec {
  kind: "param_value" | "presence" | "op_type" | "pipeline_stage";
  slot: number;
  slot_end: number | null;
  param_key: string | null;
  label: string;
  values: string[];
  assignment: Record<string, string>;
}

export interface ChartBar {
  x: string;
  color: string | null;
  model: string;
  value: number;
}

export interface ChartSpec {
  x_variable: VariableSpec | null;
  color_variable: VariableSpec | null;
  metric: string;
  bars: ChartBar[];
}

export interface RefinementGroup {
  fixed: Record<string, string>;
  free: VariableSpec[];
  member_ids: string[];
}

export interface ComparisonResponse {
  variables: VariableSpec[];
  chart?: ChartSpec;
  refinement?: RefinementGroup[];
}

export interface BehaviorCell {
  value: number;
  relative?: number;
  new_errors?: number;
}

export interface BehaviorRow {
  key: string;
  count: number;
  per_model: Record<string, BehaviorCell>;
}

export interface BehaviorsResponse {
  base: string;
  total: number;
  offset: number;
  limit: number;
  rows: BehaviorRow[];
}

export interface SortSpec {
  model: string;
  mode: "absolute" | "relative";
  direction: "asc" | "desc";
}

export interface DiffHistogram {
  edges: number[];
  unchanged: number[];
  gained: number[];
  lost: number[];
  change_score: number;
}

export interface LayerModelEntry {
  param_count: number;
  zero_count: number;
  sparsity: number;
  hist?: { edges: number[]; counts: number[] };
  diff?: DiffHistogram;
}

export interface LayerTreeNode {
  path: string;
  models: Record<string, LayerModelEntry>;
  children: LayerTreeNode[];
}

export interface LayersResponse {
  base: string;
  kind: string;
  tree: LayerTreeNode;
  ranking: Record<string, [string, number][]>;
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly code: string, message: string) {
    super(message);
  }
}

export class ApiClient {
  /** Raw bodies of every response, for displayed-number provenance checks. */
  readonly captured: unknown[] = [];

  constructor(readonly baseUrl: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const parsed = await response.json();
    if (!response.ok) {
      const err = parsed as { code?: string; message?: string };
      throw new ApiError(response.status, err.code ?? "Error",
        err.message ?? response.statusText);
    }
    this.captured.push(parsed);
    return parsed as T;
  }

  models(): Promise<ModelsResponse> {
    return this.request("GET", "/v1/models");
  }

  model(id: string): Promise<ModelDetail> {
    return this.request("GET", `/v1/models/${encodeURIComponent(id)}`);
  }

  layout(mode: string, color?: string, size?: string): Promise<LayoutResponse> {
    const params = new URLSearchParams({ mode });
    if (color) params.set("color", color);
    if (size) params.set("size", size);
    return this.request("GET", `/v1/layout?${params}`);
  }

  histogram(metric: string, bins = 10): Promise<HistogramResponse> {
    return this.request(
      "GET", `/v1/metrics/${encodeURIComponent(metric)}/histogram?bins=${bins}`);
  }

  applyFilters(filters: MetricFilter[]): Promise<{ enabled: string[] }> {
    return this.request("POST", "/v1/filters", { filters });
  }

  pareto(x: string, y: string): Promise<{ front: string[] }> {
    const params = new URLSearchParams({ x, y });
    return this.request("GET", `/v1/pareto?${params}`);
  }

  compare(ids: string[], metric: string): Promise<ComparisonResponse> {
    return this.request("POST", "/v1/selection/compare", { ids, metric });
  }

  behaviors(body: {
    ids: string[];
    metric: string;
    base?: string;
    relative_mode?: string;
    group_by?: string;
    sort?: SortSpec;
    offset?: number;
    limit?: number;
  }): Promise<BehaviorsResponse> {
    return this.request("POST", "/v1/behaviors", body);
  }

  layers(body: {
    ids: string[];
    base?: string;
    kind?: string;
    sort?: SortSpec;
  }): Promise<LayersResponse> {
    return this.request("POST", "/v1/layers", body);
  }
}

/** Per-view monotonically increasing sequence; stale responses are dropped. */
export class RequestSequencer {
  private seq = 0;

  next(): number {
    return ++this.seq;
  }

  isCurrent(token: number): boolean {
    return token === this.seq;
  }
}
