/** Session state: current query draft, constraints, and an append-only history. */

import type {
  ConstraintsSpec,
  GenerateRequest,
  GenerateResponse,
  SchemaInfo,
} from "./types";

export interface HistoryEntry {
  request: GenerateRequest;
  response: GenerateResponse;
}

export interface ConstraintDraft {
  fixed: Set<string>;
  ranges: Map<string, [number, number]>;
  directions: Map<string, "increase" | "decrease">;
}

export class SessionState {
  readonly schema: SchemaInfo;
  query: Record<string, string | number>;
  target: number;
  seed: number;
  overrides: Record<string, unknown>;
  constraints: ConstraintDraft;
  private readonly history: HistoryEntry[] = [];

  constructor(schema: SchemaInfo) {
    this.schema = schema;
    this.query = { ...schema.example_query };
    this.target = schema.default_target;
    this.seed = 0;
    this.overrides = {};
    this.constraints = { fixed: new Set(), ranges: new Map(), directions: new Map() };
    for (const feature of schema.features) {
      if (feature.immutable) this.constraints.fixed.add(feature.name);
      if (feature.direction) this.constraints.directions.set(feature.name, feature.direction);
    }
  }

  setQueryValue(name: string, value: string | number): void {
    this.query[name] = value;
  }

  toggleFixed(name: string, fixed: boolean): void {
    if (fixed) this.constraints.fixed.add(name);
    else this.constraints.fixed.delete(name);
  }

  setDirection(name: string, direction: "increase" | "decrease" | null): void {
    if (direction === null) this.constraints.directions.delete(name);
    else this.constraints.directions.set(name, direction);
  }

  setRange(name: string, range: [number, number] | null): void {
    if (range === null) this.constraints.ranges.delete(name);
    else this.constraints.ranges.set(name, range);
  }

  buildConstraints(): ConstraintsSpec {
    const spec: ConstraintsSpec = {};
    if (this.constraints.fixed.size > 0) {
      spec.features_to_fix = [...this.constraints.fixed];
    }
    if (this.constraints.ranges.size > 0) {
      spec.permitted_ranges = Object.fromEntries(this.constraints.ranges);
    }
    if (this.constraints.directions.size > 0) {
      spec.directions = Object.fromEntries(this.constraints.directions);
    }
    return spec;
  }

  buildRequest(): GenerateRequest {
    const request: GenerateRequest = {
      query: { ...this.query },
      target: this.target,
      seed: this.seed,
    };
    const constraints = this.buildConstraints();
    if (Object.keys(constraints).length > 0) request.constraints = constraints;
    if (Object.keys(this.overrides).length > 0) request.hyperparameters = { ...this.overrides };
    return request;
  }

  /** History is append-only within a session. */
  record(request: GenerateRequest, response: GenerateResponse): HistoryEntry {
    const entry = { request, response };
    this.history.push(entry);
    return entry;
  }

  get entries(): readonly HistoryEntry[] {
    return this.history;
  }
}
