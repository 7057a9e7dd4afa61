/** Pure HTML renderers. Every number shown comes verbatim from the service
 * response (String(value)); the UI computes nothing itself, so snapshots of
 * these strings pin the display to recorded responses. */

import type {
  AttributionEntry,
  FeatureInfo,
  GenerateResponse,
  MetricsInfo,
  SchemaInfo,
  TraceRecord,
} from "./types";
import type { ConstraintDraft, HistoryEntry } from "./state";

export function escapeHtml(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function num(value: number): string {
  return escapeHtml(String(value));
}

export function renderQueryForm(schema: SchemaInfo, values: Record<string, string | number>): string {
  const rows = schema.features.map((feature) => {
    const value = values[feature.name];
    const control =
      feature.kind === "continuous"
        ? `<input type="number" step="any" name="q-${escapeHtml(feature.name)}" ` +
          `value="${escapeHtml(value)}" min="${num(feature.min ?? NaN)}" max="${num(feature.max ?? NaN)}">` +
          `<span class="bounds">[${num(feature.min ?? NaN)}, ${num(feature.max ?? NaN)}]</span>`
        : `<select name="q-${escapeHtml(feature.name)}">` +
          (feature.categories ?? [])
            .map((c) => `<option value="${escapeHtml(c)}"${String(c) === String(value) ? " selected" : ""}>${escapeHtml(c)}</option>`)
            .join("") +
          `</select>`;
    return `<label class="query-row"><span class="fname">${escapeHtml(feature.name)}</span>${control}</label>`;
  });
  return `<form id="query-form">${rows.join("")}</form>`;
}

export function renderConstraintPanel(schema: SchemaInfo, draft: ConstraintDraft): string {
  const rows = schema.features.map((feature) => {
    const fixed = draft.fixed.has(feature.name);
    const parts = [
      `<span class="fname">${escapeHtml(feature.name)}</span>`,
      `<label><input type="checkbox" name="fix-${escapeHtml(feature.name)}"${fixed ? " checked" : ""}> fix</label>`,
    ];
    if (feature.kind === "continuous") {
      const range = draft.ranges.get(feature.name);
      const direction = draft.directions.get(feature.name) ?? "";
      parts.push(
        `<input type="number" step="any" placeholder="lo" name="lo-${escapeHtml(feature.name)}" value="${range ? num(range[0]) : ""}">`,
        `<input type="number" step="any" placeholder="hi" name="hi-${escapeHtml(feature.name)}" value="${range ? num(range[1]) : ""}">`,
        `<select name="dir-${escapeHtml(feature.name)}">` +
          ["", "increase", "decrease"]
            .map((d) => `<option value="${d}"${d === direction ? " selected" : ""}>${d === "" ? "none" : d}</option>`)
            .join("") +
          `</select>`,
      );
    }
    return `<div class="constraint-row">${parts.join("")}</div>`;
  });
  return `<div id="constraint-panel">${rows.join("")}</div>`;
}

/** A cell highlights exactly when the discretized value differs from the query value. */
export function isChanged(queryValue: string | number, cfValue: string | number): boolean {
  return String(queryValue) !== String(cfValue);
}

export function renderCounterfactualTable(response: GenerateResponse): string {
  const features = Object.keys(response.query);
  const header =
    `<tr><th>feature</th><th>query</th>` +
    response.set.map((_, i) => `<th>cf ${i + 1}</th>`).join("") +
    `</tr>`;
  const body = features
    .map((name) => {
      const queryValue = response.query[name];
      const cells = response.set
        .map((row) => {
          const changed = isChanged(queryValue, row[name]);
          return `<td class="${changed ? "changed" : "same"}">${escapeHtml(row[name])}</td>`;
        })
        .join("");
      return `<tr><th>${escapeHtml(name)}</th><td class="query">${escapeHtml(queryValue)}</td>${cells}</tr>`;
    })
    .join("");
  return `<table class="cf-table">${header}${body}</table>`;
}

export function renderMetrics(metrics: MetricsInfo): string {
  const entries: [string, number][] = [
    ["proximity", metrics.proximity],
    ["sparsity", metrics.sparsity],
    ["plausibility", metrics.plausibility],
    ["diversity", metrics.diversity],
    ["confidence", metrics.confidence],
    ["average", metrics.average],
  ];
  const items = entries
    .map(([name, value]) => `<li><span class="mname">${name}</span><span class="mvalue" data-metric="${name}">${num(value)}</span></li>`)
    .join("");
  return `<ul class="metrics">${items}</ul>`;
}

export function renderAttributionBars(scores: AttributionEntry[]): string {
  const ordered = [...scores].sort((a, b) => b.attr - a.attr);
  const top = ordered.length > 0 ? Math.max(...ordered.map((s) => Math.abs(s.attr))) : 0;
  const rows = ordered
    .map((entry) => {
      const width = top > 0 ? (Math.abs(entry.attr) / top) * 100 : 0;
      return (
        `<div class="attr-row"><span class="fname">${escapeHtml(entry.feature)}</span>` +
        `<svg width="120" height="12" viewBox="0 0 120 12"><rect x="0" y="1" height="10" width="${(width * 1.2).toFixed(1)}" fill="#4878b0"></rect></svg>` +
        `<span class="avalue" data-attr="${escapeHtml(entry.feature)}">${num(entry.attr)}</span></div>`
      );
    })
    .join("");
  return `<div class="attributions">${rows}</div>`;
}

export function renderLossSparkline(trace: TraceRecord[]): string {
  if (trace.length === 0) return `<svg class="sparkline" width="220" height="40"></svg>`;
  const totals = trace.map((r) => r.total);
  const lo = Math.min(...totals);
  const hi = Math.max(...totals);
  const span = hi - lo || 1;
  const step = 220 / Math.max(totals.length - 1, 1);
  const points = totals
    .map((v, i) => `${(i * step).toFixed(1)},${(38 - ((v - lo) / span) * 36).toFixed(1)}`)
    .join(" ");
  const markers = trace
    .map((r, i) => (r.perturbed ? `<line x1="${(i * step).toFixed(1)}" y1="0" x2="${(i * step).toFixed(1)}" y2="40" stroke="#999" stroke-dasharray="2,2"></line>` : ""))
    .join("");
  return `<svg class="sparkline" width="220" height="40">${markers}<polyline points="${points}" fill="none" stroke="#b04848"></polyline></svg>`;
}

export function renderResult(entry: HistoryEntry, index: number): string {
  const { response } = entry;
  const flags =
    `<p class="flags">target <b>${escapeHtml(response.target)}</b>, seed <b>${escapeHtml(response.seed)}</b>, ` +
    `restarts <b>${escapeHtml(response.restarts_used)}</b>, ` +
    `threshold ${response.threshold_met ? "<b>met</b>" : '<b class="warn">not met</b>'}</p>`;
  return (
    `<section class="result" data-index="${index}">` +
    `<h3>run ${index + 1}</h3>` +
    flags +
    renderCounterfactualTable(response) +
    renderMetrics(response.metrics) +
    renderAttributionBars(response.attributions.scores) +
    renderLossSparkline(response.trace) +
    `</section>`
  );
}

export function renderError(message: string): string {
  return `<div class="error" role="alert">${escapeHtml(message)}</div>`;
}

export function renderHistoryCompare(a: HistoryEntry, b: HistoryEntry, ia: number, ib: number): string {
  const metricNames: (keyof MetricsInfo)[] = [
    "proximity", "sparsity", "plausibility", "diversity", "confidence", "average",
  ];
  const rows = metricNames
    .map((name) =>
      `<tr><th>${name}</th><td data-side="a">${num(a.response.metrics[name])}</td>` +
      `<td data-side="b">${num(b.response.metrics[name])}</td></tr>`)
    .join("");
  return (
    `<section class="compare"><h3>run ${ia + 1} vs run ${ib + 1}</h3>` +
    `<table class="compare-metrics"><tr><th></th><th>run ${ia + 1}</th><th>run ${ib + 1}</th></tr>${rows}</table>` +
    `<div class="compare-sets">${renderCounterfactualTable(a.response)}${renderCounterfactualTable(b.response)}</div>` +
    `</section>`
  );
}
