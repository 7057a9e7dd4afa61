"""Shared test oracles, independent of the library's gradient code."""

import numpy as np


def fd_gradient(fn, X, h=1e-5):
    """Central finite differences of a scalar function over an array."""
    X = np.asarray(X, dtype=float)
    grad = np.zeros_like(X)
    it = np.nditer(X, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        up = X.copy()
        dn = X.copy()
        up[idx] += h
        dn[idx] -= h
        grad[idx] = (fn(up) - fn(dn)) / (2 * h)
        it.iternext()
    return grad


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-7):
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def smooth_set_matrix(rng, n, d, x_query, eps_change, margin=5e-3):
    """Random set matrix away from the absolute-value and threshold kinks."""
    while True:
        X = rng.standard_normal((n, d))
        gaps = np.abs(np.abs(X - x_query[None, :]) - eps_change)
        if np.abs(X - x_query[None, :]).min() > margin and gaps.min() > margin:
            return X


def random_relu_net(rng, d, hidden=(6, 5), out_dim=1):
    """Small random network used as a differentiation target in tests."""
    from gradcf.network import NeuralNet

    dims = [d, *hidden, out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(scale=1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(rng.normal(scale=0.1, size=fan_out))
    return NeuralNet(weights, biases, "sigmoid" if out_dim == 1 else "softmax")


def away_from_relu_kinks(net, X, margin=1e-3):
    """True when every hidden pre-activation is clear of the rectifier corner."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    _, zs, _ = net._forward_cache(X)
    return all(np.abs(z).min() > margin for z in zs[:-1])
