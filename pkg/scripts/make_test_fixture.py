#!/usr/bin/env python3
"""Generate the cross-platform model fixture used by tests/test_forest.py.

Run once; the outputs under tests/data/ are committed so future runs (and
other platforms) can verify that a stored model predicts identically.
"""

from pathlib import Path

import numpy as np

from policyforest.data import Dataset
from policyforest.forest import ForestParams, predict_policy, predict_vote, save, train
from policyforest.tree import TreeParams

OUT = Path(__file__).resolve().parents[1] / "tests" / "data"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(20240917))
    n = 400
    x = rng.standard_normal((n, 3))
    d = (rng.random(n) < 0.5).astype(np.int64)
    y = np.sign(x[:, 0]) * d + 0.5 * rng.standard_normal(n)
    ds = Dataset(covariates=x, treatments=d, outcomes=y)
    params = ForestParams(
        n_trees=8, subsample=120,
        tree=TreeParams(min_arm_leaf=6, split_features=2, max_depth=4),
        seed=314,
    )
    forest = train(ds, params, threads=1)
    save(forest, OUT / "model_fixture.json")

    xs = rng.standard_normal((64, 3))
    np.save(OUT / "fixture_covariates.npy", xs)
    np.save(OUT / "fixture_votes.npy", predict_vote(forest, xs))
    np.save(OUT / "fixture_actions.npy", predict_policy(forest, xs))
    print(f"wrote fixture model and 64 reference predictions to {OUT}")


if __name__ == "__main__":
    main()
