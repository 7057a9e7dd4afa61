"""Experiment drivers: ablations, perturbation/penalty toggles, multi-class
sweeps, hyperparameter grids and the diversity-cost bench.

Queries within a batch are independent seeded runs, so drivers can fan them
out over worker processes; results are collected in submission order and are
identical to a serial run.
"""

import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from . import losses
from .engine import Constraints, Hyperparameters, generate, with_seed
from .evaluation import evaluate_set, meets_thresholds, query_row, select_queries
from .losses import LossWeights

_WORKER_CTX = {}


def _init_worker(model, dataset, target):
    _WORKER_CTX["model"] = model
    _WORKER_CTX["dataset"] = dataset
    _WORKER_CTX["target"] = target


@dataclass
class RunSummary:
    """Slim per-query record so batches stay cheap to ship across processes."""

    metrics: object
    confidence: float
    best_total: float
    threshold_met: bool
    restarts_used: int


def _run_one(model, dataset, target, query, hp, constraints, exclude=()):
    result = generate(model, query, target, dataset.schema, dataset.preprocessor,
                      dataset.X_train, hp, constraints)
    metrics = evaluate_set(result.set_encoded, result.query_encoded, dataset.X_train,
                           model, target, dataset.schema, dataset.preprocessor.mad_vector_,
                           k=hp.k_neighbors, eps_change=hp.eps_change, exclude=exclude)
    return RunSummary(metrics, result.target_confidence, float(result.breakdown.total),
                      result.threshold_met, result.restarts_used)


def _worker_task(args):
    pos, hp, constraints, exclude = args
    ctx = _WORKER_CTX
    query = query_row(ctx["dataset"], pos)
    return _run_one(ctx["model"], ctx["dataset"], ctx["target"], query, hp, constraints, exclude)

TERMS = ("validity", "proximity", "sparsity", "plausibility", "diversity")

# the 8 term subsets of the ablation protocol; validity+proximity always included
ABLATION_COMBOS = (
    ("validity", "proximity"),
    ("validity", "proximity", "sparsity"),
    ("validity", "proximity", "plausibility"),
    ("validity", "proximity", "diversity"),
    ("validity", "proximity", "sparsity", "plausibility"),
    ("validity", "proximity", "sparsity", "diversity"),
    ("validity", "proximity", "plausibility", "diversity"),
    ("validity", "proximity", "sparsity", "plausibility", "diversity"),
)

# hyperparameter search ranges honored as documented defaults
GRID_RANGES = {
    "lambda": [0.25, 0.5, 0.75, 1.0],
    "gamma_pen": [0.05, 0.1, 0.15, 0.2],
    "gamma_pert": [0.3, 0.5, 0.7, 0.9],
    "tau_prox": [0.1, 0.2, 0.3, 0.4, 0.5],
    "tau_spars": [0.1, 0.2, 0.3, 0.4, 0.5],
    "tau_plaus": [0.1, 0.2, 0.3, 0.4, 0.5],
    "tau_div": [0.5, 0.6, 0.7, 0.9],
    "tau_loss": [0.3, 0.4, 0.5, 0.6, 0.7],
}


@dataclass
class ExperimentTable:
    """Rows of metric summaries, one per configuration."""

    rows: list
    dataset: str = "dataset"
    seeds: tuple = ()

    def to_frame(self):
        return pd.DataFrame(self.rows)

    def save_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump({"dataset": self.dataset, "seeds": list(self.seeds), "rows": self.rows},
                      fh, indent=2)


def run_batch(model, dataset, target, hp, query_positions, constraints=None,
              exclude=(), workers=1):
    """Generate and score each query; returns a list of RunSummary.

    With workers > 1 the queries run in a process pool; results come back in
    query order either way.
    """
    tasks = [(pos, hp, constraints, exclude) for pos in query_positions]
    if workers <= 1 or len(tasks) <= 1:
        return [_run_one(model, dataset, target, query_row(dataset, pos), h, c, e)
                for pos, h, c, e in tasks]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(model, dataset, target)) as pool:
        return list(pool.map(_worker_task, tasks))


def summarize(label, summaries, hp, runtime_s):
    keys = ("proximity", "sparsity", "plausibility", "diversity", "confidence", "average")
    row = {"label": label}
    for key in keys:
        row[key] = (float(np.mean([getattr(s.metrics, key) for s in summaries]))
                    if summaries else None)
    row["threshold_rate"] = (float(np.mean([meets_thresholds(s.metrics, hp.penalties) for s in summaries]))
                             if summaries else None)
    row["n_queries"] = len(summaries)
    row["n_threshold_met"] = int(sum(s.threshold_met for s in summaries))
    row["best_loss_mean"] = float(np.mean([s.best_total for s in summaries])) if summaries else None
    row["runtime_s"] = round(runtime_s, 3)
    return row


def _combo_weights(base: LossWeights, combo):
    missing = {"validity", "proximity"} - set(combo)
    if missing:
        raise ValueError(f"every ablation combination must include validity and proximity; missing {sorted(missing)}")
    unknown = set(combo) - set(TERMS)
    if unknown:
        raise ValueError(f"unknown loss terms in combination: {sorted(unknown)}")
    return LossWeights(
        prox=base.prox,
        spars=base.spars if "sparsity" in combo else 0.0,
        plaus=base.plaus if "plausibility" in combo else 0.0,
        div=base.div if "diversity" in combo else 0.0,
    )


def ablation_run(model, dataset, target, hp: Hyperparameters, seeds=(0, 1, 2),
                 combos=ABLATION_COMBOS, n_queries=10, workers=1) -> ExperimentTable:
    """One row per term combination, metrics averaged over queries and seeds."""
    rows = []
    for i, combo in enumerate(combos, start=1):
        weights = _combo_weights(hp.weights, combo)
        summaries = []
        start = time.perf_counter()
        for seed in seeds:
            hp_run = replace(with_seed(hp, seed), weights=weights)
            queries = select_queries(dataset, model, target, limit=n_queries)
            summaries += run_batch(model, dataset, target, hp_run, queries, workers=workers)
        label = f"combo{i}:" + "+".join(t[:4] for t in combo)
        rows.append(summarize(label, summaries, hp, time.perf_counter() - start))
    return ExperimentTable(rows, seeds=tuple(seeds))


def toggle_study(model, dataset, target, hp: Hyperparameters, toggle,
                 seeds=tuple(range(5)), n_queries=4, workers=1) -> ExperimentTable:
    """Paired on/off comparison for the perturbation or penalty machinery."""
    if toggle == "perturbation":
        variants = {"on": hp, "off": replace(hp, max_perturbations=0)}
    elif toggle == "penalty":
        off = replace(hp, penalties=replace(hp.penalties, enabled=False))
        variants = {"on": hp, "off": off}
    else:
        raise ValueError(f"unknown toggle {toggle!r}; use 'perturbation' or 'penalty'")

    rows = []
    queries = select_queries(dataset, model, target, limit=n_queries)
    for label, hp_variant in variants.items():
        summaries = []
        start = time.perf_counter()
        for seed in seeds:
            summaries += run_batch(model, dataset, target, with_seed(hp_variant, seed),
                                   queries, workers=workers)
        row = summarize(f"{toggle}_{label}", summaries, hp, time.perf_counter() - start)
        row["per_run_best_loss"] = [s.best_total for s in summaries]
        rows.append(row)
    return ExperimentTable(rows, seeds=tuple(seeds))


def multiclass_sweep(model, dataset, target, hp: Hyperparameters, seeds=(0,),
                     n_queries=6, workers=1) -> ExperimentTable:
    """One row per origin class; the target class's own row is skipped."""
    classes = sorted(set(int(c) for c in np.unique(dataset.y)))
    if target not in classes:
        raise ValueError(f"target class {target} not present in the dataset")
    rows = []
    for origin in classes:
        if origin == target:
            continue
        summaries = []
        start = time.perf_counter()
        for seed in seeds:
            queries = select_queries(dataset, model, target, limit=n_queries, origin_class=origin)
            summaries += run_batch(model, dataset, target, with_seed(hp, seed), queries,
                                   workers=workers)
        row = summarize(f"origin{origin}", summaries, hp, time.perf_counter() - start)
        row["origin_class"] = origin
        row["class_distance"] = abs(origin - target)
        rows.append(row)
    return ExperimentTable(rows, seeds=tuple(seeds))


def _apply_grid_value(hp: Hyperparameters, name, value) -> Hyperparameters:
    if name == "lambda":
        return replace(hp, weights=LossWeights(value, value, value, value))
    if name == "gamma_pen":
        return replace(hp, penalties=replace(hp.penalties, gamma=value))
    if name in ("tau_prox", "tau_spars", "tau_plaus", "tau_div"):
        return replace(hp, penalties=replace(hp.penalties, **{name: value}))
    if name in Hyperparameters.__dataclass_fields__:
        return replace(hp, **{name: value})
    raise ValueError(f"unknown grid hyperparameter {name!r}")


def grid_sweep(model, dataset, target, hp: Hyperparameters, grid: dict,
               seeds=(0,), n_queries=4, workers=1) -> ExperimentTable:
    """Cartesian sweep over named hyperparameter value lists, ranked by average score."""
    if not grid:
        raise ValueError("empty grid")
    names = list(grid)
    rows = []
    for values in itertools.product(*(grid[n] for n in names)):
        hp_point = hp
        for name, value in zip(names, values):
            hp_point = _apply_grid_value(hp_point, name, value)
        summaries = []
        start = time.perf_counter()
        for seed in seeds:
            queries = select_queries(dataset, model, target, limit=n_queries)
            summaries += run_batch(model, dataset, target, with_seed(hp_point, seed),
                                   queries, workers=workers)
        label = ",".join(f"{n}={v}" for n, v in zip(names, values))
        row = summarize(label, summaries, hp_point, time.perf_counter() - start)
        row.update(dict(zip(names, values)))
        rows.append(row)
    rows.sort(key=lambda r: -(r["average"] if r["average"] is not None else -np.inf))
    return ExperimentTable(rows, seeds=tuple(seeds))


def bench_diversity(sizes=(2, 4, 8, 16), width=128, reps=400, seed=0) -> ExperimentTable:
    """Per-iteration cost of the diversity term (kernel + determinant + gradient).

    The determinant's cubic cost dominates as the set grows; at desk sizes a
    fixed per-call overhead also shows, so the table reports both raw
    per-call seconds and the increments between consecutive sizes.
    """
    rng = np.random.default_rng(seed)
    rows = []
    prev_cost = None
    for n in sizes:
        X = rng.standard_normal((n, width))
        losses.diversity_loss(X)  # warm-up
        best = np.inf
        for _ in range(3):
            start = time.perf_counter()
            for _ in range(reps):
                losses.diversity_loss(X)
            best = min(best, (time.perf_counter() - start) / reps)
        row = {"n": n, "seconds_per_call": best,
               "increment": None if prev_cost is None else best - prev_cost}
        prev_cost = best
        rows.append(row)
    for earlier, later in zip(rows[:-1], rows[1:]):
        later["ratio_vs_prev"] = later["seconds_per_call"] / earlier["seconds_per_call"]
    return ExperimentTable(rows, dataset=f"random({width} dims)")
