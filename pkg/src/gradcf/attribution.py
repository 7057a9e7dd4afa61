"""Feature attribution from input gradients accumulated over the optimization run.

Each recorded step holds the gradient of the target-class probability with
respect to the whole relaxed set matrix. Scores are the magnitude of the
step-and-row mean, with one-hot groups collapsed to a single score.
"""

import csv
import json

import numpy as np

from .schema import FeatureSchema


class GradientHistory:
    """Append-only store of per-step (n, d) probability gradients."""

    def __init__(self, n_rows, width):
        self.n_rows = n_rows
        self.width = width
        self._grads = []

    def record(self, step_gradient):
        g = np.asarray(step_gradient, dtype=float)
        if g.shape != (self.n_rows, self.width):
            raise ValueError(
                f"gradient shape mismatch: expected {(self.n_rows, self.width)}, got {g.shape}")
        self._grads.append(g.copy())
        return self

    @property
    def steps(self):
        return len(self._grads)

    def mean_gradient(self):
        """Mean over recorded steps and set rows, one value per encoded dim."""
        if not self._grads:
            raise ValueError("gradient history is empty")
        return np.mean(np.stack(self._grads), axis=(0, 1))


class AttributionReport:
    """Per-original-feature importance scores, ordered descending."""

    def __init__(self, scores, steps, target, query_id="query", constrained=()):
        self.scores = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        self.steps = steps
        self.target = target
        self.query_id = query_id
        self.constrained = tuple(constrained)

    def score(self, name):
        return dict(self.scores)[name]

    def top_feature(self):
        return self.scores[0][0]

    def bottom_feature(self):
        return self.scores[-1][0]

    def to_dict(self):
        return {
            "query_id": self.query_id,
            "target": self.target,
            "steps": self.steps,
            "constrained": list(self.constrained),
            "scores": [{"feature": name, "attr": float(v)} for name, v in self.scores],
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feature", "attr"])
            writer.writerows(self.scores)


def compute_attributions(history: GradientHistory, schema: FeatureSchema,
                         target=None, query_id="query", constrained=()) -> AttributionReport:
    """Collapse the mean gradient to one non-negative score per original feature.

    Continuous features take the absolute mean-gradient value; one-hot groups
    take the Euclidean norm over their block.
    """
    mean_g = history.mean_gradient()
    scores = {}
    for f in schema.features:
        block = schema.block(f.name)
        if f.kind == "continuous":
            scores[f.name] = float(np.abs(mean_g[block.start]))
        else:
            scores[f.name] = float(np.linalg.norm(mean_g[block]))
    return AttributionReport(scores, history.steps, target, query_id, constrained)


def fixed_feature_analysis(model, queries, target, feature_name, schema, preprocessor,
                           X_obs, hparams=None, validity_floor=0.5):
    """Generate with one feature pinned for every query and report the metric row.

    The pinned feature is excluded from the distance metrics to avoid bias.
    The validity column averages target confidence over all runs; the other
    columns average over runs whose confidence clears validity_floor, and are
    None when no run does (rendered as "-" in tables).
    """
    from .engine import Constraints, generate
    from .evaluation import evaluate_set

    constraints = Constraints(features_to_fix=[feature_name])
    confidences, valid_metrics = [], []
    for query in queries:
        result = generate(model, query, target, schema, preprocessor, X_obs,
                          hparams, constraints)
        confidences.append(result.target_confidence)
        if result.target_confidence > validity_floor:
            metrics = evaluate_set(
                result.set_encoded, result.query_encoded, X_obs, model, target,
                schema, preprocessor.mad_vector_,
                k=(hparams.k_neighbors if hparams else 5),
                eps_change=(hparams.eps_change if hparams else 1e-2),
                exclude=(feature_name,))
            valid_metrics.append(metrics)

    row = {"feature": feature_name, "validity": float(np.mean(confidences)),
           "n_queries": len(confidences), "n_valid": len(valid_metrics)}
    for key in ("proximity", "sparsity", "plausibility", "diversity"):
        row[key] = (float(np.mean([getattr(m, key) for m in valid_metrics]))
                    if valid_metrics else None)
    return row
