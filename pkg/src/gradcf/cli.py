"""Command line entry points: train, explain, evaluate, experiment, serve, plot."""

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, synthetic
from .attribution import compute_attributions
from .data import load_dataset, prepare
from .engine import Constraints, Hyperparameters, generate
from .evaluation import evaluate_frame, evaluate_set, query_row, select_queries
from .experiments import (GRID_RANGES, ablation_run, bench_diversity, grid_sweep,
                          multiclass_sweep, toggle_study)
from .network import load_model, save_model, train_network
from .plots import attribution_bars_svg, loss_curves_svg
from .schema import FeatureSchema
from .service import ExplainerApp, build_server

log = logging.getLogger("gradcf")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a command needs: data source, model source, knobs, output."""

    dataset: dict
    model: dict = field(default_factory=lambda: {"train": {}})
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    constraints: Constraints = field(default_factory=Constraints)
    target: int = 1
    output: str = "out"
    seed: int = 0

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "model": self.model,
            "hyperparameters": self.hyperparameters.to_dict(),
            "constraints": self.constraints.to_dict(),
            "target": self.target,
            "output": self.output,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "dataset" not in doc:
            raise ConfigError("config field 'dataset' is required")
        dataset = doc["dataset"]
        if not ("csv" in dataset) ^ ("synthetic" in dataset):
            raise ConfigError("config field 'dataset' needs exactly one of 'csv' or 'synthetic'")
        if "csv" in dataset and "schema" not in dataset:
            raise ConfigError("config field 'dataset.schema' is required with 'dataset.csv'")
        model = doc.get("model", {"train": {}})
        if not ("path" in model) ^ ("train" in model):
            raise ConfigError("config field 'model' needs exactly one of 'path' or 'train'")
        try:
            hp = Hyperparameters.from_dict(doc.get("hyperparameters", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config field 'hyperparameters': {exc}") from exc
        try:
            constraints = Constraints.from_dict(doc.get("constraints", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config field 'constraints': {exc}") from exc
        return cls(dataset=dataset, model=model, hyperparameters=hp,
                   constraints=constraints, target=int(doc.get("target", 1)),
                   output=doc.get("output", "out"), seed=int(doc.get("seed", 0)))

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc


def load_context(config: RunConfig, out_dir: Path):
    """Build (dataset, model, accuracy) from a config, training when asked."""
    if "synthetic" in config.dataset:
        frame, schema = synthetic.from_spec(config.dataset["synthetic"])
        dropped = 0
    else:
        schema = FeatureSchema.load(config.dataset["schema"])
        frame, dropped = load_dataset(config.dataset["csv"], schema)
        if dropped:
            log.info("dropped %d rows with missing values", dropped)
    dataset = prepare(frame, schema, seed=config.seed)

    accuracy = None
    if "path" in config.model:
        model = load_model(config.model["path"])
    else:
        spec = dict(config.model.get("train") or {})
        spec.setdefault("seed", config.seed)
        model, accuracy = train_network(dataset, **spec)
        save_model(model, out_dir / "model.json")
    return dataset, model, accuracy


def write_manifest(out_dir: Path, command, config: RunConfig, artifacts, extra=None):
    doc = {
        "command": command,
        "config": config.to_dict(),
        "seed": config.seed,
        "versions": {
            "gradcf": __version__,
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "python": platform.python_version(),
        },
        "artifacts": sorted(artifacts),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if extra:
        doc.update(extra)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def cmd_train(config: RunConfig) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    if "path" in config.model:
        raise ConfigError("train command requires a 'train' model config")
    dataset, model, accuracy = load_context(config, out)
    _write_json(out / "accuracy.json", accuracy)
    write_manifest(out, "train", config, ["model.json", "accuracy.json"])
    print(json.dumps({"accuracy": accuracy}, indent=2))
    return 0


def _resolve_query(config: RunConfig, dataset, model, args):
    if getattr(args, "query_json", None):
        query = json.loads(args.query_json)
        missing = [n for n in dataset.schema.names if n not in query]
        if missing:
            raise ConfigError(f"query is missing features: {missing}")
        return query, "json"
    positions = select_queries(dataset, model, config.target)
    if len(positions) == 0:
        raise ConfigError("no test instance is classified away from the target class")
    index = getattr(args, "query_index", None) or 0
    if index >= len(positions):
        raise ConfigError(f"query index {index} out of range ({len(positions)} candidates)")
    return query_row(dataset, positions[index]), f"test[{index}]"


def cmd_explain(config: RunConfig, args) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    dataset, model, _ = load_context(config, out)
    query, query_id = _resolve_query(config, dataset, model, args)

    result = generate(model, query, config.target, dataset.schema, dataset.preprocessor,
                      dataset.X_train, config.hyperparameters, config.constraints)
    hp = config.hyperparameters
    metrics = evaluate_set(result.set_encoded, result.query_encoded, dataset.X_train,
                           model, config.target, dataset.schema,
                           dataset.preprocessor.mad_vector_,
                           k=hp.k_neighbors, eps_change=hp.eps_change)
    attribution = compute_attributions(result.history, dataset.schema,
                                       target=config.target, query_id=query_id,
                                       constrained=result.fixed_features)

    result.set_frame.to_csv(out / "counterfactuals.csv", index=False)
    attribution.save_json(out / "attributions.json")
    attribution.save_csv(out / "attributions.csv")
    _write_json(out / "metrics.json", metrics.to_dict())
    _write_json(out / "query.json", {"query": {k: _plain(v) for k, v in query.items()},
                                     "target": config.target, "query_id": query_id,
                                     "threshold_met": result.threshold_met,
                                     "restarts_used": result.restarts_used})
    with open(out / "trace.jsonl", "w") as fh:
        for rec in result.trace:
            fh.write(json.dumps(rec) + "\n")
    artifacts = ["counterfactuals.csv", "attributions.json", "attributions.csv",
                 "metrics.json", "query.json", "trace.jsonl"]
    if "train" in config.model:
        artifacts.append("model.json")
    write_manifest(out, "explain", config, artifacts)
    if not result.threshold_met:
        print("note: loss threshold not met within the restart budget", file=sys.stderr)
    print(json.dumps({"metrics": metrics.to_dict(),
                      "threshold_met": result.threshold_met}, indent=2))
    return 0


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def cmd_evaluate(config: RunConfig, args) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    dataset, model, _ = load_context(config, out)
    query, query_id = _resolve_query(config, dataset, model, args)
    hp = config.hyperparameters

    if getattr(args, "set_path", None):
        set_frame = pd.read_csv(args.set_path, dtype=str, keep_default_na=False)
        for f in dataset.schema.continuous_features():
            set_frame[f.name] = pd.to_numeric(set_frame[f.name])
        source = str(args.set_path)
    else:
        result = generate(model, query, config.target, dataset.schema,
                          dataset.preprocessor, dataset.X_train,
                          config.hyperparameters, config.constraints)
        set_frame = result.set_frame
        source = "generated"
    metrics = evaluate_frame(set_frame, query, dataset, model, config.target,
                             k=hp.k_neighbors, eps_change=hp.eps_change)
    payload = {"metrics": metrics.to_dict(), "source": source, "query_id": query_id}
    _write_json(out / "metrics.json", payload)
    write_manifest(out, "evaluate", config, ["metrics.json"])
    print(json.dumps(payload, indent=2))
    return 0


def cmd_experiment(config: RunConfig, args) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    dataset, model, _ = load_context(config, out)
    hp = config.hyperparameters
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else (0, 1, 2)
    workers = args.workers

    if args.experiment == "ablation":
        table = ablation_run(model, dataset, config.target, hp, seeds=seeds,
                             n_queries=args.queries, workers=workers)
    elif args.experiment == "toggle":
        table = toggle_study(model, dataset, config.target, hp, args.toggle,
                             seeds=seeds, n_queries=args.queries, workers=workers)
    elif args.experiment == "multiclass":
        table = multiclass_sweep(model, dataset, config.target, hp, seeds=seeds,
                                 n_queries=args.queries, workers=workers)
    elif args.experiment == "grid":
        grid = json.loads(args.grid) if args.grid else {"lambda": GRID_RANGES["lambda"]}
        table = grid_sweep(model, dataset, config.target, hp, grid, seeds=seeds,
                           n_queries=args.queries, workers=workers)
    elif args.experiment == "bench":
        table = bench_diversity()
    else:
        raise ConfigError(f"unknown experiment {args.experiment!r}")

    table.save_csv(out / "table.csv")
    table.save_json(out / "table.json")
    write_manifest(out, f"experiment:{args.experiment}", config, ["table.csv", "table.json"])
    print(table.to_frame().to_string(index=False))
    return 0


def cmd_serve(config: RunConfig, args) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    dataset, model, _ = load_context(config, out)
    app = ExplainerApp(model, dataset, config.hyperparameters, default_target=config.target)
    server = build_server(app, args.host, args.port)
    print(f"serving on http://{args.host}:{server.server_address[1]}  (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_plot(args) -> int:
    made = []
    if args.trace:
        trace = [json.loads(line) for line in open(args.trace) if line.strip()]
        path = args.out or str(Path(args.trace).with_suffix(".svg"))
        made.append(loss_curves_svg(trace, path))
    if args.attribution:
        from .attribution import AttributionReport
        doc = json.load(open(args.attribution))
        report = AttributionReport({e["feature"]: e["attr"] for e in doc["scores"]},
                                   doc.get("steps", 0), doc.get("target"),
                                   doc.get("query_id", "query"))
        path = args.out or str(Path(args.attribution).with_suffix(".svg"))
        made.append(attribution_bars_svg(report, path))
    if not made:
        raise ConfigError("plot requires --trace and/or --attribution")
    for path in made:
        print(path)
    return 0


def _add_common(parser):
    parser.add_argument("--config", required=True, help="path to a JSON run config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--target", type=int, help="override the target class")
    for name in ("lambda-prox", "lambda-spars", "lambda-plaus", "lambda-div"):
        parser.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"))
    for name in ("alpha", "gamma-pert", "gamma-pen", "tau-prox", "tau-spars",
                 "tau-plaus", "tau-div", "tau-loss", "eps-change"):
        parser.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"))
    parser.add_argument("--n", type=int, help="counterfactual set size")
    parser.add_argument("--max-iter", type=int, dest="max_iter")
    parser.add_argument("--max-pert", type=int, dest="max_pert")
    parser.add_argument("--k", type=int, help="plausibility neighbors")
    parser.add_argument("--validity-mode", choices=["auto", "hinge", "bce", "ce"])
    parser.add_argument("--fix", action="append", default=None, metavar="NAME")
    parser.add_argument("--vary", action="append", default=None, metavar="NAME")
    parser.add_argument("--range", action="append", default=None, metavar="NAME:LO:HI")
    parser.add_argument("--direction", action="append", default=None,
                        metavar="NAME:increase|decrease")


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        config = replace(config, seed=args.seed,
                         hyperparameters=replace(config.hyperparameters, seed=args.seed))
    if args.out:
        config = replace(config, output=args.out)
    if args.target is not None:
        config = replace(config, target=args.target)

    hp = config.hyperparameters
    weights = hp.weights
    for flag, attr in (("lambda_prox", "prox"), ("lambda_spars", "spars"),
                       ("lambda_plaus", "plaus"), ("lambda_div", "div")):
        value = getattr(args, flag, None)
        if value is not None:
            weights = replace(weights, **{attr: value})
    penalties = hp.penalties
    for flag, attr in (("gamma_pen", "gamma"), ("tau_prox", "tau_prox"),
                       ("tau_spars", "tau_spars"), ("tau_plaus", "tau_plaus"),
                       ("tau_div", "tau_div")):
        value = getattr(args, flag, None)
        if value is not None:
            penalties = replace(penalties, **{attr: value})
    updates = {"weights": weights, "penalties": penalties}
    for flag, attr in (("alpha", "learning_rate"), ("gamma_pert", "gamma_pert"),
                       ("tau_loss", "tau_loss"), ("eps_change", "eps_change"),
                       ("n", "n_counterfactuals"), ("max_iter", "max_iterations"),
                       ("max_pert", "max_perturbations"), ("k", "k_neighbors"),
                       ("validity_mode", "validity_mode")):
        value = getattr(args, flag, None)
        if value is not None:
            updates[attr] = value
    config = replace(config, hyperparameters=replace(hp, **updates))

    if any(getattr(args, a, None) for a in ("fix", "vary", "range", "direction")):
        ranges = dict(config.constraints.permitted_ranges)
        for spec in args.range or []:
            name, lo, hi = spec.rsplit(":", 2)
            ranges[name] = [float(lo), float(hi)]
        directions = dict(config.constraints.directions)
        for spec in args.direction or []:
            name, direction = spec.rsplit(":", 1)
            directions[name] = direction
        config = replace(config, constraints=Constraints(
            features_to_vary=args.vary, features_to_fix=args.fix,
            permitted_ranges=ranges, directions=directions))
    return config


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gradcf",
        description="Counterfactual explanation sets with feature attribution "
                    "for tabular neural classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the predictive model")
    _add_common(p_train)

    p_explain = sub.add_parser("explain", help="generate a counterfactual set for one query")
    _add_common(p_explain)
    p_explain.add_argument("--query-index", type=int, dest="query_index",
                           help="index into the eligible test queries")
    p_explain.add_argument("--query-json", dest="query_json",
                           help="inline JSON object of raw feature values")

    p_eval = sub.add_parser("evaluate", help="score a counterfactual set")
    _add_common(p_eval)
    p_eval.add_argument("--query-index", type=int, dest="query_index")
    p_eval.add_argument("--query-json", dest="query_json")
    p_eval.add_argument("--set", dest="set_path",
                        help="CSV of counterfactual rows; omitted = generate first")

    p_exp = sub.add_parser("experiment", help="run an experiment driver")
    _add_common(p_exp)
    p_exp.add_argument("--experiment", required=True,
                       choices=["ablation", "toggle", "multiclass", "grid", "bench"])
    p_exp.add_argument("--toggle", choices=["perturbation", "penalty"], default="perturbation")
    p_exp.add_argument("--grid", help="JSON object of hyperparameter value lists")
    p_exp.add_argument("--seeds", help="comma-separated seed list")
    p_exp.add_argument("--queries", type=int, default=4)
    p_exp.add_argument("--workers", type=int, default=1)

    p_serve = sub.add_parser("serve", help="run the HTTP companion service")
    _add_common(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8321)

    p_plot = sub.add_parser("plot", help="render SVG loss curves / attribution bars")
    p_plot.add_argument("--trace", help="trace.jsonl from an explain run")
    p_plot.add_argument("--attribution", help="attributions.json from an explain run")
    p_plot.add_argument("--out", help="output SVG path")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("GRADCF_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "plot":
            return cmd_plot(args)
        config = _apply_overrides(RunConfig.load(args.config), args)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "explain":
            return cmd_explain(config, args)
        if args.command == "evaluate":
            return cmd_evaluate(config, args)
        if args.command == "experiment":
            return cmd_experiment(config, args)
        if args.command == "serve":
            return cmd_serve(config, args)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, ValueError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
