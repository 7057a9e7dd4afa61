"""Feature schema: declares the tabular layout and its one-hot encoding."""

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Feature:
    """One column of the raw table.

    kind is "continuous" or "categorical"; categorical features carry an
    ordered category list that fixes their one-hot layout. immutable and
    direction are constraint defaults a schema author can bake in.
    """

    name: str
    kind: str
    categories: tuple = ()
    immutable: bool = False
    direction: str | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise ValueError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and len(self.categories) < 2:
            raise ValueError(f"feature {self.name!r}: categorical features need >= 2 categories")
        if self.kind == "continuous" and self.categories:
            raise ValueError(f"feature {self.name!r}: continuous features take no categories")
        if self.direction not in (None, "increase", "decrease"):
            raise ValueError(f"feature {self.name!r}: direction must be 'increase' or 'decrease'")
        if self.direction is not None and self.kind != "continuous":
            raise ValueError(f"feature {self.name!r}: direction constraints apply to continuous features only")


class FeatureSchema:
    """Ordered feature list plus the label column name.

    The encoded layout is a pure function of the feature order: continuous
    features occupy one column, categorical features a contiguous one-hot
    block of len(categories) columns.
    """

    def __init__(self, features, label="label"):
        features = [f if isinstance(f, Feature) else Feature(**f) for f in features]
        names = [f.name for f in features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if label in names:
            raise ValueError(f"label column {label!r} collides with a feature name")
        self.features = tuple(features)
        self.label = label
        self._index = {f.name: i for i, f in enumerate(features)}
        cols = {}
        start = 0
        for f in features:
            width = len(f.categories) if f.kind == "categorical" else 1
            cols[f.name] = slice(start, start + width)
            start += width
        self._cols = cols
        self.encoded_width = start

    @property
    def names(self):
        return [f.name for f in self.features]

    @property
    def n_features(self):
        return len(self.features)

    def feature(self, name):
        if name not in self._index:
            raise KeyError(f"unknown feature {name!r}")
        return self.features[self._index[name]]

    def block(self, name):
        """Encoded column slice of a feature."""
        self.feature(name)
        return self._cols[name]

    def categorical_blocks(self):
        """(feature, slice) pairs for every categorical feature."""
        return [(f, self._cols[f.name]) for f in self.features if f.kind == "categorical"]

    def continuous_features(self):
        return [f for f in self.features if f.kind == "continuous"]

    @property
    def layout(self):
        """Cached index arrays for vectorized per-block math over encoded matrices."""
        if not hasattr(self, "_layout"):
            self._layout = _Layout(self)
        return self._layout

    def to_dict(self):
        feats = []
        for f in self.features:
            d = {"name": f.name, "kind": f.kind}
            if f.kind == "categorical":
                d["categories"] = list(f.categories)
            if f.immutable:
                d["immutable"] = True
            if f.direction is not None:
                d["direction"] = f.direction
            feats.append(d)
        return {"features": feats, "label": self.label}

    @classmethod
    def from_dict(cls, d):
        if "features" not in d:
            raise ValueError("schema file missing 'features'")
        feats = []
        for entry in d["features"]:
            entry = dict(entry)
            if "categories" in entry:
                entry["categories"] = tuple(str(c) for c in entry["categories"])
            feats.append(Feature(**entry))
        return cls(feats, label=d.get("label", "label"))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def __eq__(self, other):
        return isinstance(other, FeatureSchema) and self.to_dict() == other.to_dict()

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_layout", None)
        return state

    def __repr__(self):
        kinds = ", ".join(f"{f.name}:{f.kind[:4]}" for f in self.features)
        return f"FeatureSchema([{kinds}], label={self.label!r})"


class _Layout:
    """Precomputed gather/scatter indices for the encoded matrix.

    cat_dims lists every one-hot column grouped block by block; cat_offsets
    marks the start of each block within that gather, so np.add.reduceat
    yields per-block sums; pad_idx/pad_mask give a rectangular (n_blocks,
    max_width) view into the gather for per-block argmax.
    """

    def __init__(self, schema: FeatureSchema):
        self.cont_dims = np.array(
            [schema.block(f.name).start for f in schema.continuous_features()], dtype=int)
        blocks = schema.categorical_blocks()
        widths = np.array([b.stop - b.start for _, b in blocks], dtype=int)
        self.cat_widths = widths
        self.cat_dims = np.array(
            [d for _, b in blocks for d in range(b.start, b.stop)], dtype=int)
        self.cat_offsets = np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(int) if len(blocks) else np.zeros(0, dtype=int)
        if len(blocks):
            wmax = int(widths.max())
            pad_idx = np.zeros((len(blocks), wmax), dtype=int)
            pad_mask = np.zeros((len(blocks), wmax), dtype=bool)
            for i, (start, w) in enumerate(zip(self.cat_offsets, widths)):
                pad_idx[i, :w] = np.arange(start, start + w)
                pad_mask[i, :w] = True
        else:
            pad_idx = np.zeros((0, 1), dtype=int)
            pad_mask = np.zeros((0, 1), dtype=bool)
        self.pad_idx = pad_idx
        self.pad_mask = pad_mask

    def block_argmax(self, gathered):
        """Per-block argmax over a (n, len(cat_dims)) gather."""
        padded = gathered[:, self.pad_idx]
        padded = np.where(self.pad_mask[None, :, :], padded, -np.inf)
        return np.argmax(padded, axis=2)
