/** Wires the explorer together: fetch schema, edit query and constraints,
 * submit generate requests (one in flight, the rest queued), render results. */

import { ApiClient, ServiceError } from "./api";
import {
  renderConstraintPanel,
  renderError,
  renderHistoryCompare,
  renderQueryForm,
  renderResult,
} from "./render";
import { SessionState } from "./state";
import type { GenerateRequest } from "./types";

const DEFAULT_BASE = "http://127.0.0.1:8321";

export async function bootstrap(root: HTMLElement, base = DEFAULT_BASE): Promise<void> {
  const client = new ApiClient(base);
  let state: SessionState;
  try {
    state = new SessionState(await client.schema());
  } catch (err) {
    root.innerHTML = renderError(`service unreachable at ${base}: ${String(err)}`);
    return;
  }

  root.innerHTML = `
    <header><h1>counterfactual explorer</h1></header>
    <div class="columns">
      <aside>
        <h2>query</h2><div id="query-slot"></div>
        <h2>constraints</h2><div id="constraint-slot"></div>
        <div class="controls">
          <label>target <input id="target" type="number" value="${state.target}"></label>
          <label>seed <input id="seed" type="number" value="${state.seed}"></label>
          <button id="submit">generate</button>
        </div>
        <div id="error-slot"></div>
      </aside>
      <main>
        <div id="results"></div>
        <div id="compare-slot"></div>
      </main>
    </div>`;

  const querySlot = root.querySelector("#query-slot") as HTMLElement;
  const constraintSlot = root.querySelector("#constraint-slot") as HTMLElement;
  const errorSlot = root.querySelector("#error-slot") as HTMLElement;
  const results = root.querySelector("#results") as HTMLElement;
  const compareSlot = root.querySelector("#compare-slot") as HTMLElement;

  const redrawForms = () => {
    querySlot.innerHTML = renderQueryForm(state.schema, state.query);
    constraintSlot.innerHTML = renderConstraintPanel(state.schema, state.constraints);
  };
  redrawForms();

  root.addEventListener("change", (event) => {
    const el = event.target as HTMLInputElement | HTMLSelectElement;
    const name = el.getAttribute("name") ?? el.id;
    if (!name) return;
    if (name.startsWith("q-")) {
      const feature = name.slice(2);
      const info = state.schema.features.find((f) => f.name === feature);
      state.setQueryValue(feature, info?.kind === "continuous" ? Number(el.value) : el.value);
    } else if (name.startsWith("fix-")) {
      state.toggleFixed(name.slice(4), (el as HTMLInputElement).checked);
    } else if (name.startsWith("dir-")) {
      const value = el.value as "increase" | "decrease" | "";
      state.setDirection(name.slice(4), value === "" ? null : value);
    } else if (name.startsWith("lo-") || name.startsWith("hi-")) {
      const feature = name.slice(3);
      const lo = (root.querySelector(`[name="lo-${feature}"]`) as HTMLInputElement).value;
      const hi = (root.querySelector(`[name="hi-${feature}"]`) as HTMLInputElement).value;
      state.setRange(feature, lo === "" || hi === "" ? null : [Number(lo), Number(hi)]);
    } else if (name === "target") {
      state.target = Number(el.value);
    } else if (name === "seed") {
      state.seed = Number(el.value);
    }
  });

  // one request in flight; later submissions queue in order
  const queue: GenerateRequest[] = [];
  let busy = false;

  const pump = async (): Promise<void> => {
    if (busy) return;
    const request = queue.shift();
    if (!request) return;
    busy = true;
    errorSlot.innerHTML = "";
    try {
      const response = await client.generate(request);
      const entry = state.record(request, response);
      const section = document.createElement("div");
      section.innerHTML = renderResult(entry, state.entries.length - 1);
      results.prepend(section);
      if (state.entries.length >= 2) {
        const n = state.entries.length;
        compareSlot.innerHTML = renderHistoryCompare(
          state.entries[n - 2], state.entries[n - 1], n - 2, n - 1);
      }
    } catch (err) {
      const message = err instanceof ServiceError ? err.message : String(err);
      errorSlot.innerHTML = renderError(message);
    } finally {
      busy = false;
      void pump();
    }
  };

  (root.querySelector("#submit") as HTMLButtonElement).addEventListener("click", () => {
    queue.push(state.buildRequest());
    void pump();
  });
}

declare global {
  interface Window {
    GRADCF_BASE?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void bootstrap(document.getElementById("app") as HTMLElement, window.GRADCF_BASE ?? DEFAULT_BASE);
}
