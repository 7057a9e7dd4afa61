"""Minimal HTTP companion service: three JSON routes over the explainer.

POST /generate runs one counterfactual generation against the loaded model,
GET /schema describes the features for form rendering, GET /health reports
liveness. Requests are handled synchronously; each runs an isolated generate
call against shared immutable state, so concurrent requests cannot interact.
"""

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .attribution import compute_attributions
from .engine import (Constraints, Hyperparameters, InfeasibleConstraintsError,
                     generate)
from .evaluation import evaluate_set

log = logging.getLogger("gradcf.service")

MAX_SET_SIZE = 16
MAX_ITERATIONS = 2000


class ServiceError(ValueError):
    pass


class ExplainerApp:
    """Request-independent state plus the generate/schema handlers."""

    def __init__(self, model, dataset, hparams: Hyperparameters = None, default_target=1):
        self.model = model
        self.dataset = dataset
        self.hparams = hparams or Hyperparameters()
        self.default_target = default_target

    def schema_payload(self):
        ds = self.dataset
        features = []
        for f in ds.schema.features:
            entry = {"name": f.name, "kind": f.kind, "immutable": f.immutable,
                     "direction": f.direction}
            if f.kind == "categorical":
                entry["categories"] = list(f.categories)
            else:
                entry["min"] = ds.preprocessor.raw_min_[f.name]
                entry["max"] = ds.preprocessor.raw_max_[f.name]
            features.append(entry)
        example = {name: _plain(ds.frame.iloc[int(ds.idx_test[0])][name])
                   for name in ds.schema.names}
        return {
            "features": features,
            "label": ds.schema.label,
            "classes": [_plain(c) for c in ds.classes],
            "default_target": self.default_target,
            "example_query": example,
            "hyperparameters": self.hparams.to_dict(),
            "caps": {"n_counterfactuals": MAX_SET_SIZE, "max_iterations": MAX_ITERATIONS},
        }

    def generate_payload(self, body):
        if not isinstance(body, dict):
            raise ServiceError("request body must be a JSON object")
        if "query" not in body or not isinstance(body["query"], dict):
            raise ServiceError("missing 'query' object")
        query = body["query"]
        missing = [n for n in self.dataset.schema.names if n not in query]
        if missing:
            raise ServiceError(f"query is missing features: {missing}")
        target = body.get("target", self.default_target)

        overrides = dict(body.get("hyperparameters") or {})
        if "seed" in body:
            overrides["seed"] = body["seed"]
        hp_dict = self.hparams.to_dict()
        for key, value in overrides.items():
            if key not in hp_dict:
                raise ServiceError(f"unknown hyperparameter {key!r}")
            if key in ("weights", "penalties"):
                hp_dict[key] = {**hp_dict[key], **value}
            else:
                hp_dict[key] = value
        hp = Hyperparameters.from_dict(hp_dict)
        if hp.n_counterfactuals > MAX_SET_SIZE:
            raise ServiceError(f"n_counterfactuals capped at {MAX_SET_SIZE} for the service")
        if hp.max_iterations > MAX_ITERATIONS:
            raise ServiceError(f"max_iterations capped at {MAX_ITERATIONS} for the service")

        constraints = Constraints.from_dict(body.get("constraints") or {})
        ds = self.dataset
        result = generate(self.model, query, int(target), ds.schema, ds.preprocessor,
                          ds.X_train, hp, constraints)
        metrics = evaluate_set(result.set_encoded, result.query_encoded, ds.X_train,
                               self.model, result.target, ds.schema,
                               ds.preprocessor.mad_vector_,
                               k=hp.k_neighbors, eps_change=hp.eps_change)
        attributions = compute_attributions(result.history, ds.schema,
                                            target=result.target,
                                            constrained=result.fixed_features)
        rows = result.set_frame.to_dict(orient="records")
        return {
            "query": {k: _plain(v) for k, v in result.query.items()},
            "target": result.target,
            "seed": result.seed,
            "set": [{k: _plain(v) for k, v in row.items()} for row in rows],
            "relaxed": result.set_relaxed.tolist(),
            "metrics": metrics.to_dict(),
            "attributions": attributions.to_dict(),
            "threshold_met": result.threshold_met,
            "restarts_used": result.restarts_used,
            "confidences": [float(p) for p in result.target_probs],
            "trace": result.trace,
        }


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _make_handler(app: ExplainerApp):
    class Handler(BaseHTTPRequestHandler):
        def _send(self, code, payload):
            body = json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self):
            self._send(204, {})

        def do_GET(self):
            if self.path == "/health":
                self._send(200, {"status": "ok"})
            elif self.path == "/schema":
                self._send(200, app.schema_payload())
            else:
                self._send(404, {"error": f"unknown route {self.path}"})

        def do_POST(self):
            if self.path != "/generate":
                self._send(404, {"error": f"unknown route {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                self._send(200, app.generate_payload(body))
            except (ServiceError, InfeasibleConstraintsError, ValueError) as exc:
                self._send(400, {"error": str(exc)})
            except Exception as exc:  # pragma: no cover - defensive
                log.exception("generate failed")
                self._send(500, {"error": f"internal error: {exc}"})

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

    return Handler


def build_server(app: ExplainerApp, host="127.0.0.1", port=8321) -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), _make_handler(app))


def serve_background(app: ExplainerApp, host="127.0.0.1", port=8321):
    """Start the server on a daemon thread; returns (server, thread)."""
    server = build_server(app, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
