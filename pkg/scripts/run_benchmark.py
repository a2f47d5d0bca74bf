#!/usr/bin/env python3
"""End-to-end simulation benchmark: oracle vs causal-policy forest vs plug-in.

Draws a confounded training sample with known ground truth, fits both
forests, and scores them on a fresh draw. Defaults match the full-scale
configuration in configs/default.toml; shrink --n/--trees for a quick look.

    python scripts/run_benchmark.py --n 4000 --trees 50 --eval-n 20000
"""

import argparse
import time

from policyforest.baselines import train_plugin_forest
from policyforest.evaluation import build_report, format_table
from policyforest.forest import ForestParams, predict_policy, summarize, train
from policyforest.synth import DgpConfig, generate
from policyforest.tree import TreeParams


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=10_000, help="training sample size")
    ap.add_argument("--p", type=int, default=10, help="covariate dimension")
    ap.add_argument("--eval-n", type=int, default=100_000, help="held-out sample size")
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--noise-sd", type=float, default=1.0)
    ap.add_argument("--trees", type=int, default=200)
    ap.add_argument("--subsample", type=int, default=2000)
    ap.add_argument("--min-arm-leaf", type=int, default=25)
    ap.add_argument("--split-features", type=int, default=3)
    ap.add_argument("--max-depth", type=int, default=8)
    ap.add_argument("--seed", type=int, default=17, help="data seed")
    ap.add_argument("--forest-seed", type=int, default=93)
    ap.add_argument("--threads", type=int, default=None)
    return ap.parse_args()


def main():
    args = parse_args()
    params = ForestParams(
        n_trees=args.trees, subsample=args.subsample, seed=args.forest_seed,
        tree=TreeParams(min_arm_leaf=args.min_arm_leaf,
                        split_features=args.split_features,
                        max_depth=args.max_depth),
    )
    print(f"simulating n={args.n}, p={args.p} (seed {args.seed}) ...")
    train_sd = generate(DgpConfig(n=args.n, p=args.p, epsilon=args.epsilon,
                                  noise_sd=args.noise_sd, seed=args.seed))

    start = time.perf_counter()
    policy_forest = train(train_sd.base, params, threads=args.threads)
    print(f"causal-policy forest trained in {time.perf_counter() - start:.1f}s: "
          f"{summarize(policy_forest)}")
    start = time.perf_counter()
    plugin_forest = train_plugin_forest(train_sd.base, params, threads=args.threads)
    print(f"plug-in forest trained in {time.perf_counter() - start:.1f}s: "
          f"{summarize(plugin_forest)}")

    eval_sd = generate(DgpConfig(n=args.eval_n, p=args.p, epsilon=args.epsilon,
                                 noise_sd=args.noise_sd, seed=args.seed + 1))
    report = build_report(
        [("Causal-policy forest", predict_policy(policy_forest, eval_sd.base.covariates)),
         ("Plug-in causal forest", predict_policy(plugin_forest, eval_sd.base.covariates))],
        eval_sd,
    )
    print()
    print(format_table(report))


if __name__ == "__main__":
    main()
