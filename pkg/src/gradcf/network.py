"""Dense feed-forward classifier with explicit forward and backward passes.

The backward pass exposes gradients of scalar heads with respect to the
*input*, which is what the counterfactual engine and the attribution scores
consume. Weights use shape (fan_in, fan_out); hidden layers are rectified.
"""

import json

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .optim import Adam


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


class Prediction:
    """Probability head output for one instance.

    probabilities has length 1 for a sigmoid head (class-1 probability) or
    one entry per class for softmax. predicted_class follows argmax, with
    p >= 0.5 mapping to class 1 in the binary case.
    """

    __slots__ = ("probabilities", "predicted_class")

    def __init__(self, probabilities):
        probabilities = np.asarray(probabilities, dtype=float)
        self.probabilities = probabilities
        if probabilities.shape[0] == 1:
            self.predicted_class = int(probabilities[0] >= 0.5)
        else:
            self.predicted_class = int(np.argmax(probabilities))

    def __repr__(self):
        return f"Prediction(class={self.predicted_class}, p={np.round(self.probabilities, 4)})"


class NeuralNet:
    """Immutable weight container with forward, input-gradient and VJP methods."""

    def __init__(self, weights, biases, activation_out, seed=None):
        weights = [np.array(w, dtype=float) for w in weights]
        biases = [np.array(b, dtype=float) for b in biases]
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias vector per weight matrix")
        dims = [weights[0].shape[0]]
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight/bias shapes disagree ({w.shape} vs {b.shape})")
            if w.shape[0] != dims[-1]:
                raise ValueError(f"layer {i}: expected fan-in {dims[-1]}, got {w.shape[0]}")
            dims.append(w.shape[1])
        out_dim = dims[-1]
        if activation_out == "sigmoid" and out_dim != 1:
            raise ValueError("sigmoid head requires exactly 1 output unit")
        if activation_out == "softmax" and out_dim < 2:
            raise ValueError("softmax head requires >= 2 output units")
        if activation_out not in ("sigmoid", "softmax"):
            raise ValueError(f"unknown output activation {activation_out!r}")
        for a in weights + biases:
            a.flags.writeable = False
        self.weights = weights
        self.biases = biases
        self.layer_dims = dims
        self.activation_out = activation_out
        self.seed = seed

    @classmethod
    def init_random(cls, layer_dims, activation_out=None, seed=0):
        """Uniform fan-in-scaled initialization, deterministic given the seed."""
        if activation_out is None:
            activation_out = "sigmoid" if layer_dims[-1] == 1 else "softmax"
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, activation_out, seed=seed)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def n_classes(self):
        return 2 if self.activation_out == "sigmoid" else self.layer_dims[-1]

    def _check_input(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.input_dim:
            raise ValueError(f"input dimension mismatch: expected {self.input_dim}, got {X.shape[1]}")
        return X, single

    def _forward_cache(self, X):
        zs, acts = [], [X]
        a = X
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            zs.append(z)
            if i < len(self.weights) - 1:
                a = np.maximum(z, 0.0)
                acts.append(a)
        probs = _sigmoid(zs[-1]) if self.activation_out == "sigmoid" else _softmax(zs[-1])
        return probs, zs, acts

    def predict_proba(self, X):
        """Head probabilities, shape (n, 1) for sigmoid or (n, cl) for softmax."""
        X, single = self._check_input(X)
        probs, _, _ = self._forward_cache(X)
        return probs[0] if single else probs

    def forward(self, x):
        """Single-instance prediction."""
        return Prediction(self.predict_proba(np.asarray(x, dtype=float)))

    def _dprobs_to_dlogits(self, probs, dprobs):
        if self.activation_out == "sigmoid":
            return dprobs * probs * (1.0 - probs)
        inner = (dprobs * probs).sum(axis=1, keepdims=True)
        return probs * (dprobs - inner)

    def _vjp_input(self, probs, zs, dprobs):
        """Input gradient from a cached forward pass."""
        delta = self._dprobs_to_dlogits(probs, dprobs)
        for i in range(len(self.weights) - 1, 0, -1):
            delta = (delta @ self.weights[i].T) * (zs[i - 1] > 0)
        return delta @ self.weights[0].T

    def backprop_input(self, X, dprobs):
        """Vector-Jacobian product: gradient w.r.t. X of sum(dprobs * probs)."""
        X, single = self._check_input(X)
        dprobs = np.asarray(dprobs, dtype=float)
        if single:
            dprobs = dprobs[None, :]
        probs, zs, _ = self._forward_cache(X)
        dX = self._vjp_input(probs, zs, dprobs)
        return dX[0] if single else dX

    def class_prob_gradient(self, X, class_index):
        """Gradient of the class probability w.r.t. each input row."""
        X_arr, single = self._check_input(X)
        out_dim = self.layer_dims[-1]
        if self.activation_out == "sigmoid":
            if class_index not in (0, 1):
                raise ValueError(f"invalid class index {class_index} for a binary model")
            dprobs = np.full((X_arr.shape[0], 1), 1.0 if class_index == 1 else -1.0)
        else:
            if not 0 <= class_index < out_dim:
                raise ValueError(f"invalid class index {class_index} for {out_dim} classes")
            dprobs = np.zeros((X_arr.shape[0], out_dim))
            dprobs[:, class_index] = 1.0
        grad = self.backprop_input(X_arr, dprobs)
        return grad[0] if single else grad

    def _param_grads(self, X, dlogits):
        """Weight/bias gradients for a batch given gradient at the output logits."""
        _, zs, acts = self._forward_cache(X)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        delta = dlogits
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (zs[i - 1] > 0)
        return grads_w, grads_b

    def to_dict(self):
        return {
            "layer_dims": list(self.layer_dims),
            "activation_out": self.activation_out,
            "layers": [
                {"weights": w.flatten(order="C").tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
            "seed": self.seed,
        }


def input_gradient(model: NeuralNet, x, class_index):
    """Backpropagated gradient of the class probability at a single input."""
    return model.class_prob_gradient(np.asarray(x, dtype=float), class_index)


def save_model(model: NeuralNet, path):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_model(path) -> NeuralNet:
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("layer_dims", "activation_out", "layers"):
        if key not in doc:
            raise ValueError(f"model file missing field {key!r}")
    dims = doc["layer_dims"]
    layers = doc["layers"]
    if len(layers) != len(dims) - 1:
        raise ValueError(f"field 'layers': expected {len(dims) - 1} layers for dims {dims}, got {len(layers)}")
    weights, biases = [], []
    for i, layer in enumerate(layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        flat = np.asarray(layer["weights"], dtype=float)
        if flat.size != fan_in * fan_out:
            raise ValueError(
                f"field 'layers[{i}].weights': expected {fan_in * fan_out} values, got {flat.size}"
            )
        bias = np.asarray(layer["bias"], dtype=float)
        if bias.size != fan_out:
            raise ValueError(f"field 'layers[{i}].bias': expected {fan_out} values, got {bias.size}")
        weights.append(flat.reshape(fan_in, fan_out, order="C"))
        biases.append(bias)
    return NeuralNet(weights, biases, doc["activation_out"], seed=doc.get("seed"))


class DenseClassifier(BaseEstimator, ClassifierMixin):
    """Trainable wrapper: two rectified hidden layers by default, Adam on weights.

    fit keeps the epoch snapshot with the best validation accuracy; without a
    validation set it keeps the final weights. Binary targets train a single
    sigmoid unit, >= 3 classes a softmax head.
    """

    def __init__(self, hidden_layer_sizes=(64, 32), epochs=150, batch_size=32,
                 learning_rate=1e-3, seed=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X, y, X_val=None, y_val=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if len(X) == 0:
            raise ValueError("empty training set")
        self.classes_ = np.unique(y)
        n_classes = len(self.classes_)
        out_dim = 1 if n_classes <= 2 else n_classes
        dims = [X.shape[1], *self.hidden_layer_sizes, out_dim]
        net = NeuralNet.init_random(dims, seed=self.seed)
        params = [np.array(a) for a in net.weights + net.biases]
        n_layers = len(net.weights)

        if out_dim == 1:
            targets = y.astype(float)[:, None]
        else:
            targets = np.zeros((len(y), out_dim))
            targets[np.arange(len(y)), y] = 1.0

        opt = Adam([p.shape for p in params], lr=self.learning_rate)
        rng = np.random.default_rng(self.seed)
        best_acc, best_params = -1.0, [np.array(p) for p in params]

        for _ in range(self.epochs):
            order = rng.permutation(len(X))
            for start in range(0, len(X), self.batch_size):
                idx = order[start:start + self.batch_size]
                batch_net = NeuralNet(params[:n_layers], params[n_layers:], net.activation_out)
                probs, _, _ = batch_net._forward_cache(X[idx])
                dlogits = (probs - targets[idx]) / len(idx)
                gw, gb = batch_net._param_grads(X[idx], dlogits)
                params = opt.step(params, gw + gb)
            if X_val is not None and len(X_val):
                acc = self._accuracy(params, n_layers, net.activation_out, X_val, y_val)
                # ties prefer the later epoch: same accuracy, better-calibrated logits
                if acc >= best_acc:
                    best_acc = acc
                    best_params = [np.array(p) for p in params]
            else:
                best_params = params

        self.net_ = NeuralNet(best_params[:n_layers], best_params[n_layers:],
                              net.activation_out, seed=self.seed)
        return self

    @staticmethod
    def _accuracy(params, n_layers, activation, X, y):
        net = NeuralNet(params[:n_layers], params[n_layers:], activation)
        probs = net.predict_proba(X)
        pred = (probs[:, 0] >= 0.5).astype(int) if activation == "sigmoid" else np.argmax(probs, axis=1)
        return float(np.mean(pred == np.asarray(y)))

    def predict_proba(self, X):
        """Two columns [P(0), P(1)] for binary heads, per-class columns otherwise."""
        probs = self.net_.predict_proba(np.asarray(X, dtype=float))
        if self.net_.activation_out == "sigmoid":
            return np.column_stack([1.0 - probs[:, 0], probs[:, 0]])
        return probs

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))


def train_network(dataset, hidden=(64, 32), epochs=150, batch_size=32,
                  learning_rate=1e-3, seed=0):
    """Train on a PreparedDataset; returns (net, accuracy dict over the three splits)."""
    clf = DenseClassifier(hidden_layer_sizes=hidden, epochs=epochs, batch_size=batch_size,
                          learning_rate=learning_rate, seed=seed)
    clf.fit(dataset.X_train, dataset.y_train, X_val=dataset.X_val, y_val=dataset.y_val)
    accuracy = {
        "train": clf.score(dataset.X_train, dataset.y_train),
        "val": clf.score(dataset.X_val, dataset.y_val),
        "test": clf.score(dataset.X_test, dataset.y_test),
    }
    return clf.net_, accuracy
