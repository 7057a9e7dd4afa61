"""Metric computation on counterfactual sets and the five-criterion average."""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import losses
from .engine import target_class_probabilities
from .schema import FeatureSchema


@dataclass
class MetricsReport:
    """proximity/sparsity/plausibility are minimized, diversity/confidence maximized.

    average = (confidence + diversity + (1-proximity) + (1-sparsity)
    + (1-plausibility)) / 5, so higher is better across the board.
    """

    proximity: float
    sparsity: float
    plausibility: float
    diversity: float
    confidence: float

    @property
    def average(self):
        return average_score(self.proximity, self.sparsity, self.plausibility,
                             self.diversity, self.confidence)

    def to_dict(self):
        return {
            "proximity": self.proximity,
            "sparsity": self.sparsity,
            "plausibility": self.plausibility,
            "diversity": self.diversity,
            "confidence": self.confidence,
            "average": self.average,
        }


def average_score(proximity, sparsity, plausibility, diversity, confidence):
    """Balanced score over the five criteria; minimized metrics enter inverted."""
    return (confidence + diversity + (1.0 - proximity) + (1.0 - sparsity)
            + (1.0 - plausibility)) / 5.0


def _reduced_schema(schema: FeatureSchema, exclude):
    keep = [f for f in schema.features if f.name not in exclude]
    if not keep:
        raise ValueError("cannot exclude every feature from metric computation")
    return FeatureSchema(keep, label=schema.label)


def _keep_mask(schema: FeatureSchema, exclude):
    mask = np.ones(schema.encoded_width, dtype=bool)
    for name in exclude:
        mask[schema.block(name)] = False
    return mask


def evaluate_set(set_encoded, query_enc, X_obs, model, target, schema: FeatureSchema,
                 mad, k=5, eps_change=1e-2, exclude=()) -> MetricsReport:
    """Score a (re-encoded, discretized) counterfactual set against its query.

    Pure function of its inputs: external sets score identically to internally
    generated ones. exclude drops features from the distance metrics (their
    dims never enter proximity/sparsity/plausibility/diversity) while the
    confidence forward pass always sees the full rows.
    """
    set_encoded = np.asarray(set_encoded, dtype=float)
    if set_encoded.ndim != 2 or len(set_encoded) == 0:
        raise ValueError("counterfactual set must be a non-empty matrix")
    query_enc = np.asarray(query_enc, dtype=float)

    confidence = float(np.mean(target_class_probabilities(model, set_encoded, target)))

    if exclude:
        sub_schema = _reduced_schema(schema, exclude)
        mask = _keep_mask(schema, exclude)
        Xs, q, obs, mad_v = set_encoded[:, mask], query_enc[mask], np.asarray(X_obs)[:, mask], np.asarray(mad)[mask]
    else:
        sub_schema, Xs, q, obs, mad_v = schema, set_encoded, query_enc, np.asarray(X_obs), np.asarray(mad)

    k = min(k, len(obs))
    proximity = losses.proximity_loss(Xs, q, mad_v)[0]
    sparsity = losses.sparsity_loss(Xs, q, sub_schema, eps_change)[0]
    plausibility = losses.plausibility_loss(Xs, obs, k)[0]
    diversity = max(0.0, losses.diversity_loss(Xs)[0])
    return MetricsReport(proximity, sparsity, plausibility, diversity, confidence)


def evaluate_frame(set_frame, query, dataset, model, target, k=5, eps_change=1e-2, exclude=()):
    """Score a raw-unit counterfactual table (own or externally produced)."""
    pre = dataset.preprocessor
    return evaluate_set(pre.transform(set_frame), pre.transform_row(dict(query)),
                        dataset.X_train, model, target, dataset.schema,
                        pre.mad_vector_, k=k, eps_change=eps_change, exclude=exclude)


def select_queries(dataset, model, target, limit=None, origin_class=None):
    """Test-split row positions whose prediction is not already the target class.

    Deterministic: follows the stored test-split order. origin_class filters
    by true label (used by the multi-class sweep).
    """
    probs = model.predict_proba(dataset.X_test)
    if probs.shape[1] == 1:
        pred = (probs[:, 0] >= 0.5).astype(int)
    else:
        pred = np.argmax(probs, axis=1)
    keep = pred != target
    if origin_class is not None:
        keep &= dataset.y_test == origin_class
    positions = np.flatnonzero(keep)
    return positions[:limit] if limit is not None else positions


def query_row(dataset, test_position):
    """Raw query mapping for a position within the test split."""
    row_idx = dataset.idx_test[test_position]
    return {name: dataset.frame.iloc[row_idx][name] for name in dataset.schema.names}


def meets_thresholds(metrics: MetricsReport, penalties) -> bool:
    """Whether a scored set satisfies every tau threshold of the penalty config."""
    return (metrics.proximity <= penalties.tau_prox
            and metrics.sparsity <= penalties.tau_spars
            and metrics.plausibility <= penalties.tau_plaus
            and metrics.diversity >= penalties.tau_div)


def spearman(a, b) -> float:
    """Spearman rank correlation (scipy), returned as a plain float."""
    rho = stats.spearmanr(a, b).statistic
    return float(rho)
