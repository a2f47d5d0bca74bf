"""Acceptance suite: one test per criterion, printed as PASS/FAIL lines.

Criterion 6 runs the full-scale simulation benchmark once (module fixture)
and is split into its sub-claims so each is reported separately.
"""

import time

import numpy as np
import pytest

from policyforest import cli
from policyforest.baselines import train_plugin_forest
from policyforest.data import Dataset
from policyforest.equivalence import run_equivalence_suite
from policyforest.evaluation import (
    build_report,
    ipw_pseudo_outcomes,
    ipw_welfare_gain,
    oracle_policy_value,
)
from policyforest.forest import ForestParams, predict_policy, train
from policyforest.synth import DgpConfig, generate
from policyforest.tree import (
    TreeParams,
    collect_leaves,
    grow,
    reestimate_leaves,
    weighted_abs_tau_score,
    _find_best_split,
)

from conftest import make_observational
from oracles import leaf_riesz_estimate, route_to_leaf_ids, slow_best_split

K = 25
FULL_PARAMS = ForestParams(
    n_trees=200, subsample=2000, seed=93,
    tree=TreeParams(min_arm_leaf=K, split_features=3, max_depth=8),
)


def report_line(tag, ok, detail):
    print(f"ACCEPTANCE {tag}: {'PASS' if ok else 'FAIL'} — {detail}")


def rng_for(seed):
    return np.random.Generator(np.random.Philox(seed))


@pytest.fixture(scope="module")
def benchmark():
    """Full-scale simulation run shared by criteria 4, 6 and 8."""
    start = time.perf_counter()
    train_sd = generate(DgpConfig(n=10_000, p=10, epsilon=0.1, noise_sd=1.0, seed=17))
    policy_forest = train(train_sd.base, FULL_PARAMS)
    plugin_forest = train_plugin_forest(train_sd.base, FULL_PARAMS)
    eval_sd = generate(DgpConfig(n=100_000, p=10, epsilon=0.1, noise_sd=1.0, seed=18))
    report = build_report(
        [("Causal-policy forest", predict_policy(policy_forest, eval_sd.base.covariates)),
         ("Plug-in causal forest", predict_policy(plugin_forest, eval_sd.base.covariates))],
        eval_sd,
    )
    elapsed = time.perf_counter() - start
    return dict(train_sd=train_sd, policy=policy_forest, plugin=plugin_forest,
                eval_sd=eval_sd, report=report, elapsed=elapsed)


@pytest.fixture(scope="module")
def grown_trees():
    """A batch of honest trees on synthetic data, with their index halves."""
    out = []
    for seed in range(20):
        sd = generate(DgpConfig(n=1200, p=5, epsilon=0.1, noise_sd=1.0, seed=500 + seed))
        idx = rng_for(600 + seed).permutation(sd.n)
        est_rows, split_rows = idx[:600], idx[600:]
        params = TreeParams(min_arm_leaf=10, split_features=3, max_depth=6)
        root = grow(split_rows, est_rows, sd.base, params, rng_for(700 + seed))
        out.append((sd.base, root, split_rows, est_rows, params))
    return out


def test_criterion_1_theorem_equivalence_suite():
    start = time.perf_counter()
    result = run_equivalence_suite(trials=1000, seed=20250808)
    elapsed = time.perf_counter() - start
    ok = result.ok and elapsed < 10.0
    report_line(1, ok, f"{result.passed}/1000 instances equivalent in {elapsed:.2f}s")
    assert result.ok, f"failing trials: {result.failures[:10]}"
    assert elapsed < 10.0


def test_criterion_2_riesz_identity(grown_trees):
    checked = 0
    worst = 0.0
    for ds, root, _, est_rows, _ in grown_trees:
        ids = route_to_leaf_ids(root, ds.covariates[est_rows])
        for leaf_id in dict.fromkeys(ids.tolist()):
            in_leaf = ids == leaf_id
            expected = leaf_riesz_estimate(est_rows, in_leaf, ds)
            leaf_rows = est_rows[in_leaf]
            got = (ds.outcomes[leaf_rows][ds.treatments[leaf_rows] == 1].mean()
                   - ds.outcomes[leaf_rows][ds.treatments[leaf_rows] == 0].mean())
            worst = max(worst, abs(got - expected))
            checked += 1
        if checked >= 200:
            break
    ok = checked >= 200 and worst < 1e-10
    report_line(2, ok, f"{checked} leaves, max |diff-in-means - weighted sum| = {worst:.2e}")
    assert checked >= 200
    assert worst < 1e-10


def test_criterion_3_honesty_under_split_outcome_permutation(grown_trees):
    changed = 0
    for ds, root, split_rows, est_rows, _ in grown_trees:
        perm = rng_for(42).permutation(split_rows)
        y2 = ds.outcomes.copy()
        y2[split_rows] = ds.outcomes[perm]
        shuffled = Dataset(ds.covariates, ds.treatments, y2)
        rebuilt = reestimate_leaves(root, est_rows, shuffled)
        before = [l.tau_hat for l in collect_leaves(root)]
        after = [l.tau_hat for l in collect_leaves(rebuilt)]
        changed += before != after
    report_line(3, changed == 0, f"20 trees re-estimated, {changed} changed any leaf")
    assert changed == 0


def test_criterion_4_leaf_arm_constraint(benchmark, grown_trees):
    leaves = 0
    floor = np.inf
    for forest in (benchmark["policy"], benchmark["plugin"]):
        for root, sub in zip(forest.trees, forest.subsamples):
            for leaf in collect_leaves(root):
                floor = min(floor, leaf.n_treated, leaf.n_control)
                leaves += 1
        ds = benchmark["train_sd"].base
        for root, sub in list(zip(forest.trees, forest.subsamples))[::20]:
            ids = route_to_leaf_ids(root, ds.covariates[sub.est_idx])  # independent recount
            for leaf_id in set(ids.tolist()):
                d = ds.treatments[sub.est_idx[ids == leaf_id]]
                floor = min(floor, (d == 1).sum(), (d == 0).sum())
    for ds, root, _, est_rows, params in grown_trees:
        ids = route_to_leaf_ids(root, ds.covariates[est_rows])
        for leaf_id in set(ids.tolist()):
            d = ds.treatments[est_rows[ids == leaf_id]]
            assert min((d == 1).sum(), (d == 0).sum()) >= params.min_arm_leaf
        leaves += len(collect_leaves(root))
    ok = floor >= K
    report_line(4, ok, f"{leaves} leaves checked, arm-count floor {int(floor)} (k={K})")
    assert floor >= K


def test_criterion_5_split_score_matches_brute_force():
    mismatches = []
    rng = np.random.default_rng(60)
    for case in range(50):
        n = int(rng.integers(80, 201))
        ds, _, _ = make_observational(n, 5, seed=900 + case,
                                      effect_fn=lambda x: np.sign(x[:, 0]) + 0.5 * x[:, 2])
        idx = rng_for(950 + case).permutation(n)
        split_rows, est_rows = idx[n // 2:], idx[:n // 2]
        features = sorted(rng_for(980 + case).choice(5, size=3, replace=False).tolist())
        k = 3
        fast = _find_best_split(ds, split_rows, est_rows, features, k,
                                weighted_abs_tau_score)
        slow = slow_best_split(
            ds, split_rows, est_rows, features, k,
            lambda nl, nr, tl, tr: -(nl * abs(tl) + nr * abs(tr)) / (nl + nr),
        )
        if fast is None or slow is None:
            if not (fast is None and slow is None):
                mismatches.append(case)
        elif (fast[2], fast[1]) != (slow[1], slow[2]):
            mismatches.append(case)
    report_line(5, not mismatches, f"50 nodes rescored, {len(mismatches)} disagreements")
    assert not mismatches


def _regrets(benchmark):
    rows = {r.method: r for r in benchmark["report"].rows}
    return (rows["Oracle policy"], rows["Causal-policy forest"],
            rows["Plug-in causal forest"])


def test_criterion_6a_oracle_regret_exactly_zero(benchmark):
    oracle, _, _ = _regrets(benchmark)
    report_line("6a", oracle.regret == 0.0, f"oracle regret {oracle.regret!r}")
    assert oracle.regret == 0.0


def test_criterion_6b_policy_beats_plugin(benchmark):
    _, policy, plugin = _regrets(benchmark)
    ok = policy.regret < plugin.regret
    report_line("6b", ok, f"policy regret {policy.regret:.4f} vs plugin {plugin.regret:.4f}")
    assert policy.regret < plugin.regret, (
        f"causal-policy forest regret {policy.regret:.4f} is not below the "
        f"plug-in baseline regret {plugin.regret:.4f} at the pinned configuration"
    )


def test_criterion_6c_policy_regret_within_band(benchmark):
    oracle, policy, _ = _regrets(benchmark)
    bound = 0.2 * oracle.policy_value
    ok = policy.regret < bound
    report_line("6c", ok,
                f"policy regret {policy.regret:.4f} < 0.2 x oracle value {bound:.4f}")
    assert policy.regret < bound


def test_criterion_6_runtime_budget(benchmark):
    ok = benchmark["elapsed"] < 300.0
    report_line("6-runtime", ok, f"end-to-end benchmark took {benchmark['elapsed']:.1f}s")
    assert benchmark["elapsed"] < 300.0


SMALL_CONFIG = """
[dgp]
n = 500
p = 4
seed = 61

[eval]
n = 700
seed = 62

[forest]
n_trees = 8
subsample = 200
min_arm_leaf = 8
split_features = 2
max_depth = 4
seed = 63
"""


def test_criterion_7_byte_identical_artifacts(tmp_path):
    cfg = tmp_path / "config.toml"
    cfg.write_text(SMALL_CONFIG, encoding="utf-8")
    sim = tmp_path / "sim"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(sim)]) == 0

    fits = {}
    for name, threads in (("serial", "1"), ("parallel", "3"), ("serial2", "1")):
        out = tmp_path / name
        assert cli.main(["train", "--config", str(cfg), "--data", str(sim / "train.csv"),
                         "--out", str(out), "--threads", threads]) == 0
        fits[name] = out
    policy_bytes = {k: (v / "policy_forest.json").read_bytes() for k, v in fits.items()}
    plugin_bytes = {k: (v / "plugin_forest.json").read_bytes() for k, v in fits.items()}
    same_models = (policy_bytes["serial"] == policy_bytes["parallel"] == policy_bytes["serial2"]
                   and plugin_bytes["serial"] == plugin_bytes["parallel"])

    reports = {}
    for name in ("serial", "parallel"):
        out = tmp_path / f"report_{name}"
        assert cli.main(["evaluate", "--config", str(cfg), "--out", str(out),
                         "--data", str(sim / "eval.csv"),
                         "--model", str(fits[name] / "policy_forest.json"),
                         "--model", str(fits[name] / "plugin_forest.json")]) == 0
        reports[name] = (out / "report.csv").read_bytes()
    same_reports = reports["serial"] == reports["parallel"]
    report_line(7, same_models and same_reports,
                "model files and reports byte-identical across reruns and thread counts")
    assert same_models
    assert same_reports


def test_criterion_8_ipw_gain_matches_oracle_gain(benchmark):
    fresh = generate(DgpConfig(n=10_000, p=10, epsilon=0.1, noise_sd=1.0, seed=19))
    assign = predict_policy(benchmark["policy"], fresh.base.covariates)
    ipw_gain, _ = ipw_welfare_gain(assign, fresh.base, fresh.propensity)
    truth_gain = oracle_policy_value(assign, fresh)
    psi = ipw_pseudo_outcomes(fresh.base, fresh.propensity)
    diff = assign * psi - assign * fresh.tau0
    se = diff.std(ddof=1) / np.sqrt(fresh.n)
    ok = abs(ipw_gain - truth_gain) <= 3 * se
    report_line(8, ok, f"|IPW gain - oracle gain| = {abs(ipw_gain - truth_gain):.4f} "
                       f"<= 3 SE = {3 * se:.4f}")
    assert abs(ipw_gain - truth_gain) <= 3 * se
