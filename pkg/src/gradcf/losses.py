"""Loss terms for counterfactual-set optimization, each with value and analytic gradient.

All gradients are with respect to the relaxed set matrix Xp (n rows, encoded
width d) except validity, which is returned w.r.t. the model's probability
head and chained through the network by the caller. Absolute values use the
zero subgradient at exact zeros.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from .schema import FeatureSchema

EPS_GUARD = 1e-8
DET_JITTER = 1e-8
PROB_CLIP = 1e-12


@dataclass
class LossWeights:
    """Term weights for proximity, sparsity, plausibility and diversity."""

    prox: float = 0.5
    spars: float = 0.5
    plaus: float = 0.5
    div: float = 0.5

    def __post_init__(self):
        for name in ("prox", "spars", "plaus", "div"):
            if getattr(self, name) < 0:
                raise ValueError(f"lambda_{name} must be non-negative")


@dataclass
class PenaltyConfig:
    """Threshold penalties: minimized terms above tau scale by (1+gamma),
    the maximized diversity term below tau_div scales by (1-gamma)."""

    tau_prox: float = 0.2
    tau_spars: float = 0.2
    tau_plaus: float = 0.4
    tau_div: float = 0.9
    gamma: float = 0.1
    enabled: bool = True

    def __post_init__(self):
        for name in ("tau_prox", "tau_spars", "tau_plaus", "tau_div"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.gamma < 0:
            raise ValueError("penalty gamma must be non-negative")


@dataclass
class LossBreakdown:
    """Raw per-term values plus the penalized weighted total."""

    validity: float
    proximity: float
    sparsity: float
    sparsity_smooth: float
    plausibility: float
    diversity: float
    categorical: float
    total: float

    def to_dict(self):
        return {
            "val": self.validity,
            "prox": self.proximity,
            "spars": self.sparsity,
            "spars_smooth": self.sparsity_smooth,
            "plaus": self.plausibility,
            "div": self.diversity,
            "cat": self.categorical,
            "total": self.total,
        }


def _sign(x):
    return np.sign(x)


def validity_loss(probs, target, mode):
    """Mean classification loss of the set toward the target class.

    probs is the model head output, shape (n, 1) for sigmoid or (n, cl) for
    softmax. Returns (value, gradient w.r.t. probs). Modes: "hinge" and
    "bce" for binary heads, "ce" for multi-class.
    """
    probs = np.asarray(probs, dtype=float)
    n = probs.shape[0]
    grad = np.zeros_like(probs)
    if mode in ("hinge", "bce"):
        if probs.shape[1] != 1:
            raise ValueError(f"{mode} validity requires a binary (sigmoid) model")
        if target not in (0, 1):
            raise ValueError(f"invalid target class {target} for a binary model")
        p = probs[:, 0]
        if mode == "hinge":
            y = 1.0 if target == 1 else -1.0
            score = 2.0 * p - 1.0
            margin = 1.0 - y * score
            active = margin > 0
            value = float(np.mean(np.maximum(margin, 0.0)))
            grad[:, 0] = np.where(active, -2.0 * y / n, 0.0)
        else:
            pc = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
            yv = float(target)
            value = float(-np.mean(yv * np.log(pc) + (1.0 - yv) * np.log(1.0 - pc)))
            grad[:, 0] = (pc - yv) / (pc * (1.0 - pc)) / n
        return value, grad
    if mode == "ce":
        if probs.shape[1] < 2:
            raise ValueError("ce validity requires a multi-class (softmax) model")
        if not 0 <= target < probs.shape[1]:
            raise ValueError(f"invalid target class {target} for {probs.shape[1]} classes")
        pc = np.clip(probs[:, target], PROB_CLIP, 1.0)
        value = float(-np.mean(np.log(pc)))
        grad[:, target] = -1.0 / (pc * n)
        return value, grad
    raise ValueError(f"unknown validity mode {mode!r}")


def proximity_loss(Xp, x, mad):
    """Mean MAD-scaled absolute difference to the query over all encoded dims."""
    Xp = np.asarray(Xp, dtype=float)
    diff = Xp - np.asarray(x, dtype=float)[None, :]
    n, m = Xp.shape
    value = float(np.sum(np.abs(diff) / mad[None, :]) / (n * m))
    grad = _sign(diff) / mad[None, :] / (n * m)
    return value, grad


def sparsity_loss(Xp, x, schema: FeatureSchema, eps_change=1e-2, temperature=0.05):
    """Fraction of original features changed, per set row.

    A one-hot group counts as one feature, changed when its decoded category
    differs from the query's. Returns (exact, smooth, smooth gradient); the
    exact value is the reported metric, the sigmoid surrogate at the given
    temperature drives optimization.
    """
    Xp = np.asarray(Xp, dtype=float)
    x = np.asarray(x, dtype=float)
    diff = Xp - x[None, :]
    n = Xp.shape[0]
    m = schema.n_features
    lay = schema.layout

    grad = np.zeros_like(Xp)
    exact_changed = 0
    smooth = 0.0
    if len(lay.cont_dims):
        d = diff[:, lay.cont_dims]
        exact_changed += int(np.sum(np.abs(d) >= eps_change))
        s = _sigmoid_scalar((np.abs(d) - eps_change) / temperature)
        smooth += float(np.sum(s))
        grad[:, lay.cont_dims] = s * (1.0 - s) / temperature * _sign(d)
    if len(lay.cat_dims):
        dc = diff[:, lay.cat_dims]
        set_cats = lay.block_argmax(Xp[:, lay.cat_dims])
        query_cats = lay.block_argmax(x[None, lay.cat_dims])[0]
        exact_changed += int(np.sum(set_cats != query_cats[None, :]))
        magnitude = 0.5 * np.add.reduceat(np.abs(dc), lay.cat_offsets, axis=1)
        s = _sigmoid_scalar((magnitude - eps_change) / temperature)
        smooth += float(np.sum(s))
        pull = np.repeat(s * (1.0 - s) / temperature, lay.cat_widths, axis=1)
        grad[:, lay.cat_dims] = 0.5 * pull * _sign(dc)

    scale = 1.0 / (n * m)
    return exact_changed * scale, smooth * scale, grad * scale


def _sigmoid_scalar(z):
    return expit(np.asarray(z, dtype=float))


def plausibility_loss(Xp, X_obs, k):
    """Min-max-normalized mean distance of each set row to its k nearest observed rows.

    Distance is the mean absolute difference over encoded dims. With k=1 the
    numerator is identically zero. The k-neighbor selection and the min/max
    indices are treated as locally constant when differentiating.
    """
    Xp = np.asarray(Xp, dtype=float)
    X_obs = np.asarray(X_obs, dtype=float)
    if len(X_obs) == 0:
        raise ValueError("plausibility requires a non-empty observed matrix")
    if not 1 <= k <= len(X_obs):
        raise ValueError(f"k must lie in [1, {len(X_obs)}]")
    n, m = Xp.shape
    if k == 1:
        return 0.0, np.zeros_like(Xp)

    dists = cdist(Xp, X_obs, "cityblock") / m
    rows = np.arange(n)[:, None]
    if k < len(X_obs):
        part = np.argpartition(dists, k - 1, axis=1)[:, :k]
        order = np.argsort(dists[rows, part], axis=1, kind="stable")
        nearest = part[rows, order]
    else:
        nearest = np.argsort(dists, axis=1, kind="stable")[:, :k]
    d = dists[rows, nearest]  # ascending: col 0 = min, col k-1 = max
    denom = d[:, -1] - d[:, 0] + EPS_GUARD
    s = d.sum(axis=1) - k * d[:, 0]
    value = float(np.mean(s / (k * denom)))

    # d(value_i)/d(d_j): uniform 1/(k*denom) plus corrections at the active min/max
    w = np.broadcast_to(1.0 / (k * denom)[:, None], (n, k)).copy()
    w[:, 0] += -1.0 / denom + s / (k * denom * denom)
    w[:, -1] += -s / (k * denom * denom)
    signs = np.sign(Xp[:, None, :] - X_obs[nearest])
    grad = np.einsum("ik,ikl->il", w, signs) / (m * n)
    return value, grad


def diversity_loss(Xp):
    """Determinant of the inverse-L1-distance kernel over the set.

    K_ii = 1 and K_ij = 1/(1 + L1(row_i, row_j)); the value is det(K), the
    gradient uses det(M) * inv(M) with M = K + jitter*I so a singular kernel
    (duplicated rows) still yields a finite direction.
    """
    Xp = np.asarray(Xp, dtype=float)
    n = Xp.shape[0]
    pair = Xp[:, None, :] - Xp[None, :, :]
    l1 = np.abs(pair).sum(axis=2)
    K = 1.0 / (1.0 + l1)
    np.fill_diagonal(K, 1.0)
    value = float(np.linalg.det(K))

    M = K + DET_JITTER * np.eye(n)
    G = np.linalg.det(M) * np.linalg.inv(M)  # symmetric, so inv(M).T == inv(M)
    dK = -(K * K)
    coeff = 2.0 * G * dK
    np.fill_diagonal(coeff, 0.0)
    grad = np.einsum("ij,ijl->il", coeff, np.sign(pair))
    return value, grad


def categorical_regularizer(Xp, schema: FeatureSchema):
    """Squared deviation of each relaxed one-hot block sum from 1."""
    Xp = np.asarray(Xp, dtype=float)
    grad = np.zeros_like(Xp)
    lay = schema.layout
    if not len(lay.cat_dims):
        return 0.0, grad
    sums = np.add.reduceat(Xp[:, lay.cat_dims], lay.cat_offsets, axis=1)
    value = float(np.sum((sums - 1.0) ** 2))
    grad[:, lay.cat_dims] = np.repeat(2.0 * (sums - 1.0), lay.cat_widths, axis=1)
    return value, grad


def apply_penalty(value, tau, gamma, direction):
    """Multiplicative threshold penalty; identity on compliant values."""
    return value * penalty_factor(value, tau, gamma, direction)


def penalty_factor(value, tau, gamma, direction):
    if gamma < 0:
        raise ValueError("penalty gamma must be non-negative")
    if direction == "minimize":
        return 1.0 + gamma if value > tau else 1.0
    if direction == "maximize":
        return 1.0 - gamma if value < tau else 1.0
    raise ValueError(f"unknown penalty direction {direction!r}")


@dataclass
class LossTerms:
    """Per-term values and gradients at one set matrix, before weighting."""

    validity: float
    proximity: float
    sparsity: float
    sparsity_smooth: float
    plausibility: float
    diversity: float
    categorical: float
    g_validity: np.ndarray = field(repr=False)
    g_proximity: np.ndarray = field(repr=False)
    g_sparsity_smooth: np.ndarray = field(repr=False)
    g_plausibility: np.ndarray = field(repr=False)
    g_diversity: np.ndarray = field(repr=False)
    g_categorical: np.ndarray = field(repr=False)


def compute_terms(model, Xp, x_query, target, X_obs, schema, mad, mode,
                  eps_change=1e-2, temperature=0.05, k=5, cache=None):
    """Evaluate every loss component and its gradient w.r.t. Xp.

    cache may carry a precomputed (probs, zs) forward pass over Xp so the
    engine can reuse one pass for the validity chain and attribution.
    """
    if cache is None:
        probs, zs, _ = model._forward_cache(np.asarray(Xp, dtype=float))
    else:
        probs, zs = cache
    val, dprobs = validity_loss(probs, target, mode)
    g_val = model._vjp_input(probs, zs, dprobs)
    prox, g_prox = proximity_loss(Xp, x_query, mad)
    spars, spars_smooth, g_spars = sparsity_loss(Xp, x_query, schema, eps_change, temperature)
    plaus, g_plaus = plausibility_loss(Xp, X_obs, k)
    div, g_div = diversity_loss(Xp)
    cat, g_cat = categorical_regularizer(Xp, schema)
    return LossTerms(val, prox, spars, spars_smooth, plaus, div, cat,
                     g_val, g_prox, g_spars, g_plaus, g_div, g_cat)


def total_loss(terms: LossTerms, weights: LossWeights, penalties: PenaltyConfig,
               term_clip=0.0):
    """Penalized weighted sum; diversity enters inverted as (1 - P(div)).

    Returns (LossBreakdown, gradient); each penalty's multiplicative factor
    scales its term's gradient too. term_clip > 0 clips every term's raw
    gradient elementwise before the weighted assembly: the plausibility
    term's min-max normalization is non-Lipschitz and its unclipped spikes
    otherwise drown the other terms inside Adam's moment estimates. The
    returned value is never affected, only the step direction.
    """
    if penalties.enabled:
        g = penalties.gamma
        f_prox = penalty_factor(terms.proximity, penalties.tau_prox, g, "minimize")
        f_spars = penalty_factor(terms.sparsity_smooth, penalties.tau_spars, g, "minimize")
        f_plaus = penalty_factor(terms.plausibility, penalties.tau_plaus, g, "minimize")
        f_div = penalty_factor(terms.diversity, penalties.tau_div, g, "maximize")
    else:
        f_prox = f_spars = f_plaus = f_div = 1.0

    if term_clip > 0:
        c = term_clip
        g_val, g_prox, g_spars, g_plaus, g_div, g_cat = (
            np.clip(t, -c, c) for t in (
                terms.g_validity, terms.g_proximity, terms.g_sparsity_smooth,
                terms.g_plausibility, terms.g_diversity, terms.g_categorical))
    else:
        g_val, g_prox, g_spars, g_plaus, g_div, g_cat = (
            terms.g_validity, terms.g_proximity, terms.g_sparsity_smooth,
            terms.g_plausibility, terms.g_diversity, terms.g_categorical)

    total = (
        terms.validity
        + weights.prox * f_prox * terms.proximity
        + weights.spars * f_spars * terms.sparsity_smooth
        + weights.plaus * f_plaus * terms.plausibility
        + weights.div * (1.0 - f_div * terms.diversity)
        + terms.categorical
    )
    grad = (
        g_val
        + weights.prox * f_prox * g_prox
        + weights.spars * f_spars * g_spars
        + weights.plaus * f_plaus * g_plaus
        - weights.div * f_div * g_div
        + g_cat
    )
    breakdown = LossBreakdown(
        validity=terms.validity,
        proximity=terms.proximity,
        sparsity=terms.sparsity,
        sparsity_smooth=terms.sparsity_smooth,
        plausibility=terms.plausibility,
        diversity=terms.diversity,
        categorical=terms.categorical,
        total=float(total),
    )
    return breakdown, grad
