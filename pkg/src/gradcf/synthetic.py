"""Synthetic tabular generators so every experiment runs without external downloads."""

import numpy as np
import pandas as pd

from .schema import Feature, FeatureSchema

CATEGORY_ALPHABET = "abcdefghij"


def _frame(cont, cat_labels, labels, schema):
    cols = {}
    i = 0
    for f in schema.features:
        if f.kind == "continuous":
            cols[f.name] = cont[:, i]
            i += 1
        else:
            cols[f.name] = cat_labels[f.name]
    cols[schema.label] = labels
    return pd.DataFrame(cols)


def make_blobs(n_samples=560, n_classes=2, n_continuous=4, n_categorical=5,
               n_categories=3, n_informative=2, class_sep=4.5, cat_strength=0.9,
               n_modes=4, mode_std=0.12, quantize=0.5, ordinal=False, seed=0):
    """Gaussian-blob classification data with a realistic informative/noise split.

    Only the first n_informative continuous features carry class signal
    (unit-variance Gaussians around per-class means); the rest are noise,
    mimicking tabular data where most columns matter little. With
    ordinal=True the class means sit on a line at spacing class_sep, so class
    index distance is feature-space distance. cat_strength > 0 makes each
    categorical feature lean toward a class-dependent category.

    n_modes > 0 turns each class into a mixture of that many micro-modes of
    width mode_std, with one categorical pattern per mode, reproducing the
    repeated-pattern structure of real tabular data. n_modes=0 draws plain
    per-class Gaussians and per-row categories. quantize > 0 snaps continuous
    values to that grid step, so rows repeat exactly the way measured or
    rounded columns do in practice.
    """
    rng = np.random.default_rng(seed)
    n_informative = min(n_informative, n_continuous)
    means = np.zeros((n_classes, n_continuous))
    if ordinal:
        means[:, 0] = np.arange(n_classes) * class_sep
    else:
        raw = rng.normal(size=(n_classes, n_informative))
        raw -= raw.mean(axis=0)
        pair = np.linalg.norm(raw[:, None] - raw[None, :], axis=2)
        nearest = pair[np.triu_indices(n_classes, k=1)].min()
        means[:, :n_informative] = raw * (class_sep / nearest)

    labels = rng.integers(0, n_classes, size=n_samples)
    features = [Feature(f"x{j}", "continuous") for j in range(n_continuous)]
    cats = tuple(CATEGORY_ALPHABET[:n_categories])
    for c in range(n_categorical):
        features.append(Feature(f"c{c}", "categorical", categories=cats))
    cat_labels = {f"c{c}": np.zeros(n_samples, dtype=int) for c in range(n_categorical)}

    if n_modes > 0:
        centers = rng.normal(size=(n_classes, n_modes, n_continuous)) + means[:, None, :]
        mode_cats = rng.integers(0, n_categories, size=(n_classes, n_modes, n_categorical))
        modes = rng.integers(0, n_modes, size=n_samples)
        cont = centers[labels, modes] + mode_std * rng.normal(size=(n_samples, n_continuous))
        for c in range(n_categorical):
            idx = mode_cats[labels, modes, c]
            stray = rng.random(n_samples) >= max(cat_strength, 0.9)
            idx = np.where(stray, rng.integers(0, n_categories, size=n_samples), idx)
            cat_labels[f"c{c}"] = idx
    else:
        cont = rng.normal(size=(n_samples, n_continuous)) + means[labels]
        for c in range(n_categorical):
            favored = (labels + c) % n_categories
            draw = rng.random(n_samples)
            cat_labels[f"c{c}"] = np.where(draw < cat_strength, favored,
                                           rng.integers(0, n_categories, size=n_samples))

    if quantize > 0:
        cont = np.round(cont / quantize) * quantize

    named = {name: [cats[i] for i in idx] for name, idx in cat_labels.items()}
    schema = FeatureSchema(features, label="label")
    return _frame(cont, named, labels, schema), schema


def make_linear_teacher(n_samples=800, weights=(3.0, -1.5, 0.8, -0.4, 0.2, 0.1), seed=0):
    """Binary labels from a known linear-sigmoid teacher over Gaussian inputs.

    Returns (frame, schema, weights); |weights| is the ground-truth feature
    importance ordering used to validate attribution scores.
    """
    rng = np.random.default_rng(seed)
    w = np.asarray(weights, dtype=float)
    X = rng.normal(size=(n_samples, len(w)))
    p = 1.0 / (1.0 + np.exp(-X @ w))
    labels = (rng.random(n_samples) < p).astype(int)
    schema = FeatureSchema([Feature(f"x{j}", "continuous") for j in range(len(w))], label="label")
    return _frame(X, {}, labels, schema), schema, w


def make_single_informative(n_samples=600, n_features=5, gap=3.0, seed=0):
    """Two classes separated only along feature x0; all other features are noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n_samples)
    X = rng.normal(size=(n_samples, n_features))
    X[:, 0] += labels * gap
    schema = FeatureSchema([Feature(f"x{j}", "continuous") for j in range(n_features)], label="label")
    return _frame(X, {}, labels, schema), schema


GENERATORS = {
    "blobs": make_blobs,
    "linear_teacher": lambda **kw: make_linear_teacher(**kw)[:2],
    "single_informative": make_single_informative,
}


def from_spec(spec: dict):
    """Build (frame, schema) from a config entry like {"name": "blobs", "n_classes": 2, ...}."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in GENERATORS:
        raise ValueError(f"unknown synthetic generator {name!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[name](**spec)
