"""Counterfactual-set optimization: Adam on a relaxed set matrix with
constraint projection, convergence detection and perturbation restarts."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from . import losses
from .attribution import GradientHistory
from .data import TabularPreprocessor
from .losses import LossBreakdown, LossWeights, PenaltyConfig
from .network import NeuralNet
from .optim import Adam
from .schema import FeatureSchema

log = logging.getLogger("gradcf.engine")


class InfeasibleConstraintsError(ValueError):
    pass


@dataclass
class Hyperparameters:
    """Every knob of the optimization loop; defaults follow the tuned values
    for a binary tabular task and are meant to be overridden per dataset."""

    learning_rate: float = 0.05
    weights: LossWeights = field(default_factory=LossWeights)
    penalties: PenaltyConfig = field(default_factory=PenaltyConfig)
    gamma_pert: float = 0.5
    tau_loss: float = 0.5
    tau_ld: float = 1e-5
    max_iterations: int = 1000
    max_perturbations: int = 5
    n_counterfactuals: int = 5
    eps_change: float = 0.01
    k_neighbors: int = 5
    validity_mode: str = "auto"
    sparsity_temperature: float = 0.05
    patience: int = 3
    grad_clip: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if isinstance(self.penalties, dict):
            self.penalties = PenaltyConfig(**self.penalties)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iterations < 1 or self.n_counterfactuals < 1:
            raise ValueError("max_iterations and n_counterfactuals must be >= 1")
        if self.max_perturbations < 0:
            raise ValueError("max_perturbations must be >= 0")
        if self.gamma_pert < 0:
            raise ValueError("gamma_pert must be >= 0")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.eps_change <= 0:
            raise ValueError("eps_change must be positive")
        if self.validity_mode not in ("auto", "hinge", "bce", "ce"):
            raise ValueError(f"unknown validity mode {self.validity_mode!r}")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be >= 0 (0 disables clipping)")

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["weights"] = vars(self.weights).copy()
        d["penalties"] = vars(self.penalties).copy()
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Constraints:
    """User control over which features may move and how.

    features_to_vary and features_to_fix are mutually exclusive; ranges are
    raw-unit [lo, hi] per feature name, directions are "increase"/"decrease"
    for continuous features. Schema-level immutable/direction defaults apply
    unless the user addresses the feature explicitly.
    """

    features_to_vary: list | None = None
    features_to_fix: list | None = None
    permitted_ranges: dict = field(default_factory=dict)
    directions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.features_to_vary is not None and self.features_to_fix is not None:
            raise ValueError("supply features_to_vary or features_to_fix, not both")
        for name, rng in self.permitted_ranges.items():
            lo, hi = rng
            if lo > hi:
                raise ValueError(f"range for {name!r} has lo > hi")
        for name, d in self.directions.items():
            if d not in ("increase", "decrease"):
                raise ValueError(f"direction for {name!r} must be 'increase' or 'decrease'")

    def to_dict(self):
        return {
            "features_to_vary": self.features_to_vary,
            "features_to_fix": self.features_to_fix,
            "permitted_ranges": {k: list(v) for k, v in self.permitted_ranges.items()},
            "directions": dict(self.directions),
        }

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown constraint fields: {sorted(unknown)}")
        return cls(**d)

    def _check_names(self, schema: FeatureSchema):
        mentioned = list(self.permitted_ranges) + list(self.directions)
        mentioned += self.features_to_vary or []
        mentioned += self.features_to_fix or []
        for name in mentioned:
            schema.feature(name)
        for name in self.directions:
            if schema.feature(name).kind != "continuous":
                raise ValueError(f"direction constraint on non-continuous feature {name!r}")

    def fixed_feature_names(self, schema: FeatureSchema):
        """Effective fixed set after merging schema immutability defaults."""
        self._check_names(schema)
        if self.features_to_vary is not None:
            fixed = {f.name for f in schema.features} - set(self.features_to_vary)
        else:
            fixed = set(self.features_to_fix or [])
        for f in schema.features:
            if f.immutable and not (self.features_to_vary and f.name in self.features_to_vary):
                fixed.add(f.name)
        return fixed


@dataclass
class ProjectionSpec:
    """Constraints compiled to encoded space: a fixed-dim mask and box bounds."""

    fixed_mask: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    query: np.ndarray
    fixed_features: tuple


def resolve_constraints(constraints: Constraints, schema: FeatureSchema,
                        preprocessor: TabularPreprocessor, query_enc) -> ProjectionSpec:
    constraints._check_names(schema)
    width = schema.encoded_width
    fixed = np.zeros(width, dtype=bool)
    lower = np.full(width, -np.inf)
    upper = np.full(width, np.inf)

    fixed_names = constraints.fixed_feature_names(schema)
    for name in fixed_names:
        fixed[schema.block(name)] = True

    directions = {f.name: f.direction for f in schema.features if f.direction}
    directions.update(constraints.directions)

    for f in schema.continuous_features():
        dim = schema.block(f.name).start
        if f.name in constraints.permitted_ranges:
            lo_raw, hi_raw = constraints.permitted_ranges[f.name]
            lower[dim] = preprocessor.encode_value(f.name, lo_raw)
            upper[dim] = preprocessor.encode_value(f.name, hi_raw)
        else:
            # default box is the observed range, widened to keep the query feasible
            lower[dim] = min(preprocessor.encode_value(f.name, preprocessor.raw_min_[f.name]),
                             query_enc[dim])
            upper[dim] = max(preprocessor.encode_value(f.name, preprocessor.raw_max_[f.name]),
                             query_enc[dim])
        d = directions.get(f.name)
        if d == "increase":
            lower[dim] = max(lower[dim], query_enc[dim])
        elif d == "decrease":
            upper[dim] = min(upper[dim], query_enc[dim])
        if lower[dim] > upper[dim] and not fixed[dim]:
            raise InfeasibleConstraintsError(
                f"infeasible constraints: empty permitted interval for feature {f.name!r}")

    if fixed.all():
        raise InfeasibleConstraintsError("infeasible constraints: every feature is fixed")
    return ProjectionSpec(fixed, lower, upper, np.asarray(query_enc, dtype=float),
                          tuple(sorted(fixed_names)))


def project(Xp, spec: ProjectionSpec):
    """Clamp into the permitted box, then overwrite fixed dims with the query."""
    out = np.clip(Xp, spec.lower, spec.upper)
    out[:, spec.fixed_mask] = spec.query[spec.fixed_mask]
    return out


def apply_constraints(Xp, query, constraints: Constraints, preprocessor: TabularPreprocessor):
    """One-shot projection of a relaxed set matrix (query given as a raw mapping)."""
    query_enc = preprocessor.transform_row(query)
    spec = resolve_constraints(constraints, preprocessor.schema, preprocessor, query_enc)
    return project(np.asarray(Xp, dtype=float), spec)


def perturb(Xp, query_enc, gamma_pert, eps_change, rng):
    """Add gamma-scaled Gaussian noise to the dims that already moved away
    from the query, leaving unchanged dims untouched."""
    Xp = np.asarray(Xp, dtype=float)
    changed = np.abs(Xp - np.asarray(query_enc)[None, :]) > eps_change
    noise = gamma_pert * rng.standard_normal(Xp.shape)
    return np.where(changed, Xp + noise, Xp)


def discretize(Xp, schema: FeatureSchema, preprocessor: TabularPreprocessor) -> pd.DataFrame:
    """Presentation form: argmax one-hot blocks to labels, continuous back to raw units."""
    return preprocessor.inverse_transform(np.asarray(Xp, dtype=float))


def target_class_probabilities(model: NeuralNet, X, target):
    """Probability the model assigns the target class, one value per row."""
    probs = model.predict_proba(np.asarray(X, dtype=float))
    if probs.shape[1] == 1:
        p = probs[:, 0]
        return p if target == 1 else 1.0 - p
    return probs[:, target]


@dataclass
class CounterfactualResult:
    """Optimized set plus everything needed to audit and score the run."""

    set_relaxed: np.ndarray
    set_frame: pd.DataFrame
    set_encoded: np.ndarray
    breakdown: LossBreakdown
    trace: list
    restarts_used: int
    threshold_met: bool
    history: GradientHistory
    seed: int
    target: int
    query: dict
    query_encoded: np.ndarray
    target_probs: np.ndarray
    fixed_features: tuple = ()

    @property
    def target_confidence(self):
        """Mean probability the model assigns the target class on the discretized set."""
        return float(np.mean(self.target_probs))


def resolve_validity_mode(mode, model: NeuralNet):
    """auto picks the margin loss for binary heads and cross-entropy for softmax."""
    if mode == "auto":
        return "hinge" if model.activation_out == "sigmoid" else "ce"
    if mode in ("hinge", "bce") and model.activation_out != "sigmoid":
        raise ValueError(f"validity mode {mode!r} requires a binary sigmoid model")
    if mode == "ce" and model.activation_out != "softmax":
        raise ValueError("validity mode 'ce' requires a multi-class softmax model")
    return mode


class CounterfactualExplainer(BaseEstimator):
    """Generates a diverse set of counterfactual instances for one query.

    Construct with a trained model, the feature schema and its fitted
    preprocessor; fit() takes the encoded observed matrix (training split)
    that anchors the plausibility term. explain() runs the optimization and
    returns a CounterfactualResult.
    """

    def __init__(self, model: NeuralNet, schema: FeatureSchema,
                 preprocessor: TabularPreprocessor, hparams: Hyperparameters = None):
        self.model = model
        self.schema = schema
        self.preprocessor = preprocessor
        self.hparams = hparams

    def fit(self, X_obs, y=None):
        X_obs = np.asarray(X_obs, dtype=float)
        if X_obs.ndim != 2 or X_obs.shape[1] != self.schema.encoded_width:
            raise ValueError("X_obs must be an encoded matrix matching the schema width")
        if len(X_obs) == 0:
            raise ValueError("X_obs must be non-empty")
        self.X_obs_ = X_obs
        return self

    def explain(self, query, target, constraints: Constraints = None) -> CounterfactualResult:
        if not hasattr(self, "X_obs_"):
            raise RuntimeError("call fit(X_obs) before explain()")
        hp = self.hparams or Hyperparameters()
        constraints = constraints or Constraints()
        mode = resolve_validity_mode(hp.validity_mode, self.model)

        query = dict(query)
        query_enc = self.preprocessor.transform_row(query)
        pred = self.model.forward(query_enc)
        n_classes = self.model.n_classes
        if not 0 <= target < n_classes:
            raise ValueError(f"invalid target class {target} for {n_classes} classes")
        if pred.predicted_class == target:
            raise ValueError(
                f"query is already classified as the target class {target}; nothing to explain")

        spec = resolve_constraints(constraints, self.schema, self.preprocessor, query_enc)
        k = min(hp.k_neighbors, len(self.X_obs_))

        n, d = hp.n_counterfactuals, self.schema.encoded_width
        rng_init = np.random.default_rng([hp.seed, 0])
        X = project(rng_init.standard_normal((n, d)), spec)

        out_dim = self.model.layer_dims[-1]
        if self.model.activation_out == "sigmoid":
            attr_dprobs = np.full((n, 1), 1.0 if target == 1 else -1.0)
        else:
            attr_dprobs = np.zeros((n, out_dim))
            attr_dprobs[:, target] = 1.0

        history = GradientHistory(n, d)
        trace = []
        best_total = np.inf
        best_X = X.copy()
        best_breakdown = None
        restarts_used = 0

        for restart in range(hp.max_perturbations + 1):
            if restart > 0:
                rng_r = np.random.default_rng([hp.seed, restart])
                moved = project(perturb(X, query_enc, hp.gamma_pert, hp.eps_change, rng_r), spec)
                if np.array_equal(moved, X):
                    break  # identity perturbation cannot escape the optimum
                X = moved
                restarts_used += 1
            adam = Adam([X.shape], lr=hp.learning_rate)
            prev_total = None
            calm = 0
            for t in range(hp.max_iterations):
                probs, zs, _ = self.model._forward_cache(X)
                terms = losses.compute_terms(
                    self.model, X, query_enc, target, self.X_obs_, self.schema,
                    self.preprocessor.mad_vector_, mode,
                    eps_change=hp.eps_change, temperature=hp.sparsity_temperature,
                    k=k, cache=(probs, zs))
                breakdown, grad = losses.total_loss(terms, hp.weights, hp.penalties,
                                                    term_clip=hp.grad_clip)
                record = {"t": t, "restart": restart, "total": breakdown.total,
                          "perturbed": restart > 0 and t == 0}
                record.update({key: v for key, v in breakdown.to_dict().items() if key != "total"})
                trace.append(record)
                if breakdown.total < best_total:
                    best_total = breakdown.total
                    best_X = X.copy()
                    best_breakdown = breakdown
                history.record(self.model._vjp_input(probs, zs, attr_dprobs))

                [X] = adam.step([X], [grad])
                X = project(X, spec)

                if prev_total is not None and abs(breakdown.total - prev_total) < hp.tau_ld:
                    calm += 1
                else:
                    calm = 0
                prev_total = breakdown.total
                if calm >= hp.patience:
                    break
            if best_total <= hp.tau_loss:
                break

        threshold_met = bool(best_total <= hp.tau_loss)
        if not threshold_met:
            log.info("loss threshold not met after %d restarts (best %.4f > %.4f)",
                     restarts_used, best_total, hp.tau_loss)

        set_frame = self._presentation(best_X, query, spec, constraints)
        set_encoded = self.preprocessor.transform(set_frame)
        return CounterfactualResult(
            set_relaxed=best_X, set_frame=set_frame, set_encoded=set_encoded,
            breakdown=best_breakdown, trace=trace, restarts_used=restarts_used,
            threshold_met=threshold_met, history=history, seed=hp.seed, target=int(target),
            query=query, query_encoded=query_enc,
            target_probs=target_class_probabilities(self.model, set_encoded, target),
            fixed_features=spec.fixed_features)

    def _presentation(self, Xp, query, spec: ProjectionSpec, constraints: Constraints):
        """Discretize and snap the raw-unit view back onto the constraints, so fixed
        values are bit-identical to the query and range/direction bounds hold
        exactly despite encode/decode rounding."""
        frame = discretize(Xp, self.schema, self.preprocessor)
        directions = {f.name: f.direction for f in self.schema.features if f.direction}
        directions.update(constraints.directions)
        for f in self.schema.features:
            if f.name in spec.fixed_features:
                frame[f.name] = [query[f.name]] * len(frame)
                continue
            if f.kind != "continuous":
                continue
            if f.name in constraints.permitted_ranges:
                lo, hi = constraints.permitted_ranges[f.name]
            else:
                lo = min(self.preprocessor.raw_min_[f.name], float(query[f.name]))
                hi = max(self.preprocessor.raw_max_[f.name], float(query[f.name]))
            vals = frame[f.name].clip(lo, hi)
            d = directions.get(f.name)
            if d == "increase":
                vals = vals.clip(lower=float(query[f.name]))
            elif d == "decrease":
                vals = vals.clip(upper=float(query[f.name]))
            frame[f.name] = vals
        return frame


def generate(model, query, target, schema, preprocessor, X_obs,
             hparams: Hyperparameters = None, constraints: Constraints = None):
    """Functional entry point over CounterfactualExplainer."""
    explainer = CounterfactualExplainer(model, schema, preprocessor, hparams)
    return explainer.fit(X_obs).explain(query, target, constraints)


def with_seed(hp: Hyperparameters, seed: int) -> Hyperparameters:
    return replace(hp, seed=seed, weights=replace(hp.weights), penalties=replace(hp.penalties))
