/** Wire types mirroring the service's JSON bodies exactly. */

export interface FeatureInfo {
  name: string;
  kind: "continuous" | "categorical";
  immutable: boolean;
  direction: "increase" | "decrease" | null;
  categories?: string[];
  min?: number;
  max?: number;
}

export interface SchemaInfo {
  features: FeatureInfo[];
  label: string;
  classes: (string | number)[];
  default_target: number;
  example_query: Record<string, string | number>;
  hyperparameters: Record<string, unknown>;
  caps: { n_counterfactuals: number; max_iterations: number };
}

export interface ConstraintsSpec {
  features_to_vary?: string[] | null;
  features_to_fix?: string[] | null;
  permitted_ranges?: Record<string, [number, number]>;
  directions?: Record<string, "increase" | "decrease">;
}

export interface GenerateRequest {
  query: Record<string, string | number>;
  target: number;
  seed: number;
  constraints?: ConstraintsSpec;
  hyperparameters?: Record<string, unknown>;
}

export interface MetricsInfo {
  proximity: number;
  sparsity: number;
  plausibility: number;
  diversity: number;
  confidence: number;
  average: number;
}

export interface AttributionEntry {
  feature: string;
  attr: number;
}

export interface TraceRecord {
  t: number;
  restart: number;
  total: number;
  perturbed: boolean;
  [term: string]: number | boolean;
}

export interface GenerateResponse {
  query: Record<string, string | number>;
  target: number;
  seed: number;
  set: Record<string, string | number>[];
  relaxed: number[][];
  metrics: MetricsInfo;
  attributions: {
    query_id: string;
    target: number | null;
    steps: number;
    constrained: string[];
    scores: AttributionEntry[];
  };
  threshold_met: boolean;
  restarts_used: number;
  confidences: number[];
  trace: TraceRecord[];
}

export interface ApiError {
  error: string;
}
