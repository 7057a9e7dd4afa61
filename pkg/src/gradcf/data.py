"""Dataset ingestion, preprocessing (z-score / one-hot / MAD) and the 60:20:20 split."""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .schema import FeatureSchema

MISSING_MARKERS = ("", "?")
SCALE_FLOOR = 1e-6
MAD_FLOOR = 1e-6


def load_dataset(csv_path, schema: FeatureSchema):
    """Read a CSV against a schema, dropping rows with missing or unparseable cells.

    Returns (frame, dropped_count). The header must contain exactly the schema's
    feature names plus the label column. Empty strings and "?" count as missing.
    Unknown category labels are an error, not a missing value.
    """
    frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False, skipinitialspace=True)
    expected = set(schema.names) | {schema.label}
    got = set(frame.columns)
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise ValueError(f"header mismatch: missing columns {missing}, unexpected columns {extra}")
    if len(frame) == 0:
        raise ValueError("no data rows")

    frame = frame.replace(list(MISSING_MARKERS), np.nan)
    for f in schema.continuous_features():
        frame[f.name] = pd.to_numeric(frame[f.name], errors="coerce")
    retained = frame.dropna()
    dropped = len(frame) - len(retained)
    retained = retained.reset_index(drop=True)

    for f in schema.features:
        if f.kind != "categorical":
            continue
        bad = ~retained[f.name].isin(f.categories)
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ValueError(
                f"unknown category {retained[f.name].iloc[row]!r} in column {f.name!r} at row {row}"
            )
    if len(retained) == 0:
        raise ValueError("no data rows survived the missing-value policy")
    return retained, dropped


def _mad(values):
    """Median absolute deviation from the median."""
    med = np.median(values)
    return float(np.median(np.abs(values - med)))


class TabularPreprocessor(BaseEstimator, TransformerMixin):
    """z-scores continuous features and one-hot encodes categorical ones.

    Fit only on the training split; the fitted state also carries the
    per-feature MAD (raw units) and observed min/max used as default
    range constraints. The MAD of every one-hot dimension is fixed to 1,
    and the encoded-space MAD of a continuous feature is mad/std so that
    MAD-scaled distances in encoded space equal their raw-space value.
    """

    def __init__(self, schema: FeatureSchema):
        self.schema = schema

    def fit(self, frame: pd.DataFrame, y=None):
        mean, scale, mad, lo, hi = {}, {}, {}, {}, {}
        for f in self.schema.continuous_features():
            vals = frame[f.name].to_numpy(dtype=float)
            if len(vals) < 2:
                raise ValueError("fit requires at least 2 training rows")
            mean[f.name] = float(np.mean(vals))
            std = float(np.std(vals))
            m = _mad(vals)
            if std < SCALE_FLOOR or m < MAD_FLOOR:
                warnings.warn(f"feature {f.name!r} is (near-)constant on the training split; "
                              f"flooring its scale statistics")
            scale[f.name] = max(std, SCALE_FLOOR)
            mad[f.name] = max(m, MAD_FLOOR)
            lo[f.name] = float(np.min(vals))
            hi[f.name] = float(np.max(vals))
        self.mean_ = mean
        self.scale_ = scale
        self.mad_ = mad
        self.raw_min_ = lo
        self.raw_max_ = hi

        mad_vec = np.ones(self.schema.encoded_width)
        for f in self.schema.continuous_features():
            col = self.schema.block(f.name).start
            mad_vec[col] = max(mad[f.name] / scale[f.name], MAD_FLOOR)
        self.mad_vector_ = mad_vec
        return self

    def _check_fitted(self):
        if not hasattr(self, "mean_"):
            raise RuntimeError("preprocessor is not fitted")

    def transform(self, frame: pd.DataFrame):
        """Encode rows to the (n, encoded_width) matrix."""
        self._check_fitted()
        n = len(frame)
        out = np.zeros((n, self.schema.encoded_width))
        for f in self.schema.features:
            block = self.schema.block(f.name)
            if f.kind == "continuous":
                vals = frame[f.name].to_numpy(dtype=float)
                out[:, block.start] = (vals - self.mean_[f.name]) / self.scale_[f.name]
            else:
                labels = frame[f.name].astype(str).to_numpy()
                lookup = {c: i for i, c in enumerate(f.categories)}
                for r, lab in enumerate(labels):
                    if lab not in lookup:
                        raise ValueError(f"unknown category {lab!r} in column {f.name!r} at row {r}")
                    out[r, block.start + lookup[lab]] = 1.0
        return out

    def transform_row(self, row: dict):
        """Encode one raw instance given as a mapping."""
        frame = pd.DataFrame([{k: row[k] for k in self.schema.names}])
        return self.transform(frame)[0]

    def inverse_transform(self, encoded):
        """Decode an encoded matrix back to raw rows (argmax on one-hot blocks)."""
        self._check_fitted()
        encoded = np.asarray(encoded, dtype=float)
        if encoded.ndim == 1:
            encoded = encoded[None, :]
        if encoded.shape[1] != self.schema.encoded_width:
            raise ValueError(
                f"encoded width mismatch: expected {self.schema.encoded_width}, got {encoded.shape[1]}"
            )
        cols = {}
        for f in self.schema.features:
            block = self.schema.block(f.name)
            if f.kind == "continuous":
                cols[f.name] = encoded[:, block.start] * self.scale_[f.name] + self.mean_[f.name]
            else:
                idx = np.argmax(encoded[:, block], axis=1)
                cols[f.name] = [f.categories[i] for i in idx]
        return pd.DataFrame(cols, columns=self.schema.names)

    def encode_value(self, name, value):
        """Raw -> encoded units for a single continuous feature."""
        self._check_fitted()
        return (float(value) - self.mean_[name]) / self.scale_[name]


@dataclass
class PreparedDataset:
    """Encoded matrix, integer labels, split indices and the fitted preprocessor."""

    X: np.ndarray
    y: np.ndarray
    idx_train: np.ndarray
    idx_val: np.ndarray
    idx_test: np.ndarray
    schema: FeatureSchema
    preprocessor: TabularPreprocessor
    classes: list
    frame: pd.DataFrame = field(repr=False, default=None)

    @property
    def X_train(self):
        return self.X[self.idx_train]

    @property
    def X_val(self):
        return self.X[self.idx_val]

    @property
    def X_test(self):
        return self.X[self.idx_test]

    @property
    def y_train(self):
        return self.y[self.idx_train]

    @property
    def y_val(self):
        return self.y[self.idx_val]

    @property
    def y_test(self):
        return self.y[self.idx_test]

    @property
    def n_classes(self):
        return len(self.classes)


def split_indices(n_rows, seed):
    """Seeded shuffle then a 60:20:20 partition (train gets the floor)."""
    if n_rows < 5:
        raise ValueError("need at least 5 rows to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_rows)
    n_train = int(np.floor(0.6 * n_rows))
    n_val = (n_rows - n_train) // 2
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def prepare(frame: pd.DataFrame, schema: FeatureSchema, seed=0):
    """Split, fit the preprocessor on the training rows only, and encode everything."""
    idx_train, idx_val, idx_test = split_indices(len(frame), seed)
    pre = TabularPreprocessor(schema).fit(frame.iloc[idx_train])
    X = pre.transform(frame)

    raw_labels = frame[schema.label]
    classes = sorted(pd.unique(raw_labels).tolist(), key=str)
    lookup = {c: i for i, c in enumerate(classes)}
    y = raw_labels.map(lookup).to_numpy(dtype=int)

    return PreparedDataset(
        X=X, y=y,
        idx_train=idx_train, idx_val=idx_val, idx_test=idx_test,
        schema=schema, preprocessor=pre, classes=classes, frame=frame,
    )
