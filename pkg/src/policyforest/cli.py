"""Command-line interface: simulate, train, predict, evaluate, verify-theorem.

Runs are driven by a TOML config file; flags override file values.  Every
command is deterministic given its config, and failures exit with a distinct
code per failure class (config 2, data 3, training 4, verification 5).
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import baselines, evaluation, forest as forest_mod
from .data import DataError, load_csv, read_csv_columns
from .equivalence import run_equivalence_suite
from .forest import Forest, ForestParams, ModelFileError
from .synth import TRUTH_COLUMNS, DgpConfig, generate, load_synthetic_csv, save_synthetic_csv
from .tree import TrainingError, TreeParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAIN = 4
EXIT_VERIFY = 5

METHOD_LABELS = {"policy": "Causal-policy forest", "plugin": "Plug-in causal forest"}


class ConfigError(ValueError):
    """The config file or flag values are invalid."""


DEFAULTS = {
    "dgp": {"n": 10000, "p": 10, "epsilon": 0.1, "noise_sd": 1.0, "seed": 17},
    "eval": {"n": 100000, "seed": 18},
    "forest": {"n_trees": 200, "subsample": 2000, "min_arm_leaf": 25,
               "split_features": 3, "max_depth": 8, "seed": 93, "aggregate": "vote"},
    "baselines": {"plugin": True},
    "run": {"out": "runs", "threads": 0},
}


@dataclass
class RunConfig:
    dgp: DgpConfig
    eval_n: int
    eval_seed: int
    forest: ForestParams
    plugin: bool
    out: Path
    threads: int | None


def _merge_config(path: str | None) -> dict:
    merged = {section: dict(values) for section, values in DEFAULTS.items()}
    if path is None:
        return merged
    try:
        with open(path, "rb") as fh:
            user = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    for section, values in user.items():
        if section not in merged:
            raise ConfigError(f"{path}: unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        for key, value in values.items():
            if key not in merged[section]:
                raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
            merged[section][key] = value
    return merged


def load_config(path: str | None, *, seed: int | None = None, out: str | None = None,
                threads: int | None = None, aggregate: str | None = None,
                seed_section: str = "forest") -> RunConfig:
    """Build a RunConfig from file + flag overrides; --seed targets ``seed_section``."""
    raw = _merge_config(path)
    if seed is not None:
        raw[seed_section]["seed"] = seed
    if out is not None:
        raw["run"]["out"] = out
    if threads is not None:
        raw["run"]["threads"] = threads
    if aggregate is not None:
        raw["forest"]["aggregate"] = aggregate
    try:
        dgp = DgpConfig(n=raw["dgp"]["n"], p=raw["dgp"]["p"], epsilon=raw["dgp"]["epsilon"],
                        noise_sd=raw["dgp"]["noise_sd"], seed=raw["dgp"]["seed"])
        fp = ForestParams(
            n_trees=raw["forest"]["n_trees"],
            subsample=raw["forest"]["subsample"],
            seed=raw["forest"]["seed"],
            aggregate=raw["forest"]["aggregate"],
            tree=TreeParams(
                min_arm_leaf=raw["forest"]["min_arm_leaf"],
                split_features=raw["forest"]["split_features"],
                max_depth=raw["forest"]["max_depth"],
            ),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    threads_value = raw["run"]["threads"]
    if not isinstance(threads_value, int) or threads_value < 0:
        raise ConfigError(f"threads must be a non-negative integer, got {threads_value!r}")
    return RunConfig(
        dgp=dgp,
        eval_n=int(raw["eval"]["n"]),
        eval_seed=int(raw["eval"]["seed"]),
        forest=fp,
        plugin=bool(raw["baselines"]["plugin"]),
        out=Path(raw["run"]["out"]),
        threads=None if threads_value == 0 else threads_value,
    )


def cmd_simulate(cfg: RunConfig) -> int:
    """Write train and eval CSVs with ground-truth columns; print oracle values."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    train_sd = generate(cfg.dgp)
    eval_cfg = DgpConfig(n=cfg.eval_n, p=cfg.dgp.p, epsilon=cfg.dgp.epsilon,
                         noise_sd=cfg.dgp.noise_sd, seed=cfg.eval_seed)
    eval_sd = generate(eval_cfg)
    train_path = cfg.out / "train.csv"
    eval_path = cfg.out / "eval.csv"
    save_synthetic_csv(train_sd, train_path)
    save_synthetic_csv(eval_sd, eval_path)
    for label, sd, path in (("train", train_sd, train_path), ("eval", eval_sd, eval_path)):
        value = evaluation.oracle_policy_value(baselines.oracle_policy(sd), sd)
        print(f"wrote {path} ({sd.n} rows); oracle policy value ({label}): {value!r}")
    return EXIT_OK


def _load_training_data(data_path: str):
    # Simulated files carry oracle columns; those are never features.
    header, _ = read_csv_columns(data_path)
    if all(c in header for c in TRUTH_COLUMNS):
        return load_synthetic_csv(data_path).base
    return load_csv(data_path)


def cmd_train(cfg: RunConfig, data_path: str) -> int:
    """Train the policy forest (and the plug-in baseline if enabled)."""
    ds = _load_training_data(data_path)
    cfg.out.mkdir(parents=True, exist_ok=True)
    jobs = [("policy", cfg.out / "policy_forest.json",
             lambda: forest_mod.train(ds, cfg.forest, threads=cfg.threads))]
    if cfg.plugin:
        jobs.append(("plugin", cfg.out / "plugin_forest.json",
                     lambda: baselines.train_plugin_forest(ds, cfg.forest, threads=cfg.threads)))
    for method, path, fit in jobs:
        model = fit()
        forest_mod.save(model, path)
        s = forest_mod.summarize(model)
        print(f"{METHOD_LABELS[method]}: {s['n_trees']} trees, "
              f"depth {s['depth_min']}-{s['depth_max']}, "
              f"leaves {s['leaves_min']}-{s['leaves_max']}, "
              f"min arm count {s['min_arm_count']} -> {path}")
    return EXIT_OK


def _load_covariates(path: str, p: int) -> np.ndarray:
    header, rows = read_csv_columns(path)
    if len(header) != p:
        raise DataError(f"{path}: expected {p} covariate columns, found {len(header)}")
    try:
        x = np.array([[float(cell) for cell in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric covariate cell ({exc})") from exc
    if x.size and not np.all(np.isfinite(x)):
        raise DataError(f"{path}: non-finite covariate values")
    return x.reshape(len(rows), p)


def _with_aggregate(model: Forest, aggregate: str | None) -> Forest:
    if aggregate is None or aggregate == model.params.aggregate:
        return model
    return Forest(trees=model.trees, p=model.p, method=model.method,
                  tree_seeds=model.tree_seeds,
                  params=replace(model.params, aggregate=aggregate))


def cmd_predict(model_path: str, data_path: str, out_path: str,
                aggregate: str | None = None) -> int:
    """Predict actions for a covariate CSV; writes columns action, vote."""
    model = _with_aggregate(forest_mod.load(model_path), aggregate)
    x = _load_covariates(data_path, model.p)
    actions = forest_mod.predict_policy(model, x)
    votes = forest_mod.predict_vote(model, x)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["action", "vote"])
        for a, v in zip(actions, votes):
            writer.writerow([int(a), repr(float(v))])
    print(f"wrote {out_path} ({len(actions)} rows, {int(actions.sum())} treated)")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, model_paths: list[str], data_path: str,
                 aggregate: str | None = None) -> int:
    """Score models against ground truth; print a table and write report.csv."""
    sd = load_synthetic_csv(data_path)
    policies = []
    for path in model_paths:
        model = _with_aggregate(forest_mod.load(path), aggregate)
        label = METHOD_LABELS.get(model.method, model.method)
        policies.append((label, forest_mod.predict_policy(model, sd.base.covariates)))
    report = evaluation.build_report(policies, sd)
    cfg.out.mkdir(parents=True, exist_ok=True)
    report_path = cfg.out / "report.csv"
    evaluation.write_report_csv(report, report_path)
    print(evaluation.format_table(report))
    print(f"wrote {report_path}")
    return EXIT_OK


def cmd_verify_theorem(trials: int, seed: int) -> int:
    """Run the randomized equivalence suite; nonzero exit on any failure."""
    if trials < 0:
        raise ConfigError(f"trials must be >= 0, got {trials}")
    if trials == 0:
        print("warning: 0 trials requested; vacuous pass")
        return EXIT_OK
    result = run_equivalence_suite(trials, seed)
    print(f"equivalence suite: passed {result.passed}/{result.trials} "
          f"(cells 1-8, units 4-64, seed {seed})")
    if not result.ok:
        print(f"failing trial indices: {result.failures[:20]}")
        return EXIT_VERIFY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="policyforest",
        description="Policy learning with honest causal-policy forests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *, seed_help: str) -> None:
        p.add_argument("--config", help="TOML config file (flags override file values)")
        p.add_argument("--seed", type=int, help=seed_help)
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int,
                       help="worker processes for training (0 = all cores)")
        p.add_argument("--aggregate", choices=forest_mod.AGGREGATE_MODES,
                       help="ensemble rule: vote (default) or tau_mean")

    p_sim = sub.add_parser("simulate", help="draw synthetic train/eval data with ground truth")
    add_common(p_sim, seed_help="override the generator seed")

    p_train = sub.add_parser("train", help="train the policy forest (and plug-in baseline)")
    add_common(p_train, seed_help="override the training seed")
    p_train.add_argument("--data", required=True, help="training CSV")
    p_train.add_argument("--no-plugin", action="store_true",
                         help="skip the plug-in baseline forest")

    p_pred = sub.add_parser("predict", help="predict actions for a covariate CSV")
    p_pred.add_argument("--model", required=True, help="model file")
    p_pred.add_argument("--data", required=True, help="covariate CSV (one column per feature)")
    p_pred.add_argument("--out", required=True, help="output CSV path")
    p_pred.add_argument("--aggregate", choices=forest_mod.AGGREGATE_MODES)

    p_eval = sub.add_parser("evaluate", help="score models on ground-truth data")
    add_common(p_eval, seed_help="unused for evaluate")
    p_eval.add_argument("--data", required=True, help="eval CSV with ground-truth columns")
    p_eval.add_argument("--model", required=True, action="append",
                        help="model file (repeat for several)")

    p_ver = sub.add_parser("verify-theorem",
                           help="randomized welfare/least-squares equivalence suite")
    p_ver.add_argument("--trials", type=int, default=1000)
    p_ver.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = load_config(args.config, seed=args.seed, out=args.out,
                              threads=args.threads, aggregate=args.aggregate,
                              seed_section="dgp")
            return cmd_simulate(cfg)
        if args.command == "train":
            cfg = load_config(args.config, seed=args.seed, out=args.out,
                              threads=args.threads, aggregate=args.aggregate)
            if args.no_plugin:
                cfg.plugin = False
            return cmd_train(cfg, args.data)
        if args.command == "predict":
            return cmd_predict(args.model, args.data, args.out, aggregate=args.aggregate)
        if args.command == "evaluate":
            cfg = load_config(args.config, out=args.out, threads=args.threads)
            return cmd_evaluate(cfg, args.model, args.data, aggregate=args.aggregate)
        if args.command == "verify-theorem":
            return cmd_verify_theorem(args.trials, args.seed)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ModelFileError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
