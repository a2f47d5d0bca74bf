"""Ensembles of honest policy trees.

Each tree sees its own subsample, drawn without replacement and split into
disjoint estimation and split halves.  Per-tree randomness comes from a
Philox stream keyed by (seed, tree index), so trees can be trained in any
order or in parallel with bit-identical results.  The trained forest is a
deterministic policy: average the per-tree recommendations and treat on a
nonnegative vote (or, behind the ``aggregate`` flag, threshold the averaged
effect estimate instead).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Dataset, validate
from .tree import (
    Criterion,
    Internal,
    Leaf,
    Node,
    TrainingError,
    TreeParams,
    grow,
    leaf_sign,
    route_tree,
    collect_leaves,
    tree_depth,
    weighted_abs_tau_score,
    weighted_sq_tau_score,
)

MODEL_FORMAT = "policy-forest-model"
MODEL_VERSION = 1
MAX_SUBSAMPLE_ATTEMPTS = 100

AGGREGATE_MODES = ("vote", "tau_mean")
METHODS = ("policy", "plugin")

_CRITERIA: dict[str, Criterion] = {
    "policy": weighted_abs_tau_score,
    "plugin": weighted_sq_tau_score,
}


class ModelFileError(RuntimeError):
    """The model file is malformed or has an unsupported version."""


@dataclass(frozen=True)
class ForestParams:
    """Ensemble knobs: tree count, per-tree subsample size, tree params, seed."""

    n_trees: int
    subsample: int
    tree: TreeParams = TreeParams()
    seed: int = 0
    aggregate: str = "vote"

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.subsample < 2:
            raise ValueError(f"subsample must be >= 2, got {self.subsample}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit non-negative integer")
        if self.aggregate not in AGGREGATE_MODES:
            raise ValueError(f"aggregate must be one of {AGGREGATE_MODES}, got {self.aggregate!r}")


@dataclass(frozen=True)
class Subsample:
    """The recorded index sets of one tree's draw."""

    split_idx: np.ndarray
    est_idx: np.ndarray


@dataclass
class Forest:
    """A trained ensemble; immutable in use, safe for concurrent prediction."""

    trees: list[Node]
    params: ForestParams
    p: int
    method: str = "policy"
    tree_seeds: list[int] = field(default_factory=list)
    subsamples: list[Subsample] | None = None  # kept in memory, not serialized

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _tree_rng(seed: int, b: int) -> np.random.Generator:
    # Stream b is keyed by the spawn key (b,), independent of training order.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b,))))


def _draw_subsample(rng: np.random.Generator, n: int, s: int, k: int,
                    treatments: np.ndarray, b: int) -> tuple[np.ndarray, np.ndarray]:
    """Subsample of size s without replacement, split into est/split halves.

    The estimation half takes ceil(s/2) units (it carries the k-per-arm
    constraint).  Draws whose estimation half lacks k of each arm, or whose
    split half lacks an arm entirely, are redrawn.
    """
    est_size = math.ceil(s / 2)
    for _ in range(MAX_SUBSAMPLE_ATTEMPTS):
        idx = rng.permutation(n)[:s]
        est_idx, split_idx = idx[:est_size], idx[est_size:]
        d_est = treatments[est_idx]
        d_split = treatments[split_idx]
        if ((d_est == 1).sum() >= k and (d_est == 0).sum() >= k
                and (d_split == 1).any() and (d_split == 0).any()):
            return split_idx, est_idx
    raise TrainingError(
        f"tree {b}: no feasible subsample in {MAX_SUBSAMPLE_ATTEMPTS} attempts "
        f"(need {k} of each arm in the estimation half)"
    )


_WORKER: dict = {}


def _init_worker(covariates, treatments, outcomes, params, criterion):
    _WORKER["ds"] = Dataset(covariates=covariates, treatments=treatments, outcomes=outcomes)
    _WORKER["params"] = params
    _WORKER["criterion"] = criterion


def _train_one(b: int, ds: Dataset, params: ForestParams,
               criterion: Criterion) -> tuple[Node, np.ndarray, np.ndarray]:
    rng = _tree_rng(params.seed, b)
    split_idx, est_idx = _draw_subsample(
        rng, ds.n, params.subsample, params.tree.min_arm_leaf, ds.treatments, b
    )
    root = grow(split_idx, est_idx, ds, params.tree, rng, criterion)
    return root, split_idx, est_idx


def _train_one_worker(b: int):
    return _train_one(b, _WORKER["ds"], _WORKER["params"], _WORKER["criterion"])


def train(ds: Dataset, params: ForestParams, *, method: str = "policy",
          criterion: Criterion | None = None, threads: int | None = None) -> Forest:
    """Train a forest of honest policy trees.

    Parameters
    ----------
    ds : Dataset
        Training sample; must contain at least 2k treated and 2k control units.
    params : ForestParams
    method : str
        "policy" (sign-targeting split score) or "plugin" (squared-effect
        score for the baseline); also selects the default criterion.
    criterion : callable, optional
        Override of the split score; must be picklable when threads > 1.
    threads : int, optional
        Worker processes; None uses the machine's cores, 1 runs in-process.
        The result is identical for every thread count.
    """
    validate(ds)
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if params.subsample > ds.n:
        raise TrainingError(f"subsample {params.subsample} exceeds sample size {ds.n}")
    k = params.tree.min_arm_leaf
    n_t = int((ds.treatments == 1).sum())
    n_c = int((ds.treatments == 0).sum())
    if n_t < 2 * k or n_c < 2 * k:
        raise TrainingError(
            f"training needs >= {2 * k} units of each arm, got {n_t} treated, {n_c} control"
        )
    if criterion is None:
        criterion = _CRITERIA[method]
    if threads is None:
        threads = os.cpu_count() or 1

    b_range = range(params.n_trees)
    if threads <= 1 or params.n_trees == 1:
        results = [_train_one(b, ds, params, criterion) for b in b_range]
    else:
        with ProcessPoolExecutor(
            max_workers=min(threads, params.n_trees),
            initializer=_init_worker,
            initargs=(ds.covariates, ds.treatments, ds.outcomes, params, criterion),
        ) as pool:
            chunk = max(1, params.n_trees // (4 * threads))
            results = list(pool.map(_train_one_worker, b_range, chunksize=chunk))

    return Forest(
        trees=[r[0] for r in results],
        params=params,
        p=ds.p,
        method=method,
        tree_seeds=list(b_range),
        subsamples=[Subsample(split_idx=r[1], est_idx=r[2]) for r in results],
    )


def _as_matrix(x: np.ndarray, p: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != p:
        raise ValueError(f"covariate dimension mismatch: model expects p={p}, got {x.shape[1]}")
    return x, single


def _tree_averages(f: Forest, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vote_sum = np.zeros(x.shape[0])
    tau_sum = np.zeros(x.shape[0])
    for root in f.trees:
        tau, g = route_tree(root, x)
        vote_sum += g
        tau_sum += tau
    return vote_sum / f.n_trees, tau_sum / f.n_trees


def predict_vote(f: Forest, x: np.ndarray):
    """Average per-tree recommendation in [-1, 1]: (1/B) * sum of tree signs."""
    mat, single = _as_matrix(x, f.p)
    vote, _ = _tree_averages(f, mat)
    return float(vote[0]) if single else vote


def predict_tau_mean(f: Forest, x: np.ndarray):
    """Average per-tree leaf effect estimate (the plug-in CATE prediction)."""
    mat, single = _as_matrix(x, f.p)
    _, tau = _tree_averages(f, mat)
    return float(tau[0]) if single else tau


def predict_policy(f: Forest, x: np.ndarray):
    """Treatment decision in {0, 1}; a tied aggregate treats.

    Under ``aggregate="vote"`` the decision is a majority vote of tree signs;
    under ``"tau_mean"`` it thresholds the averaged effect estimate at zero.
    """
    mat, single = _as_matrix(x, f.p)
    vote, tau = _tree_averages(f, mat)
    score = vote if f.params.aggregate == "vote" else tau
    action = (score >= 0.0).astype(np.int64)
    return int(action[0]) if single else action


def _node_to_obj(node: Node):
    if isinstance(node, Leaf):
        return {"tau_hat": node.tau_hat, "g": node.g,
                "n_treated": node.n_treated, "n_control": node.n_control}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": _node_to_obj(node.left), "right": _node_to_obj(node.right)}


def _node_from_obj(obj) -> Node:
    if not isinstance(obj, dict):
        raise ModelFileError("malformed node record")
    if "tau_hat" in obj:
        return Leaf(tau_hat=float(obj["tau_hat"]), g=int(obj["g"]),
                    n_treated=int(obj["n_treated"]), n_control=int(obj["n_control"]))
    return Internal(feature=int(obj["feature"]), threshold=float(obj["threshold"]),
                    left=_node_from_obj(obj["left"]), right=_node_from_obj(obj["right"]))


def serialize(f: Forest) -> bytes:
    """Deterministic byte encoding; identical forests give identical bytes."""
    obj = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "method": f.method,
        "p": f.p,
        "params": {
            "n_trees": f.params.n_trees,
            "subsample": f.params.subsample,
            "seed": f.params.seed,
            "aggregate": f.params.aggregate,
            "tree": {
                "min_arm_leaf": f.params.tree.min_arm_leaf,
                "split_features": f.params.tree.split_features,
                "max_depth": f.params.tree.max_depth,
            },
        },
        "tree_seeds": f.tree_seeds,
        "trees": [_node_to_obj(t) for t in f.trees],
    }
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def save(f: Forest, path: str | Path) -> None:
    """Write the model file; ``load`` reproduces predictions bit-exactly."""
    Path(path).write_bytes(serialize(f))


def load(path: str | Path) -> Forest:
    """Load a model file written by :func:`save`.

    Raises
    ------
    ModelFileError
        Unreadable JSON, wrong format marker, or unsupported version.
    """
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"{path}: not a valid model file ({exc})") from exc
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise ModelFileError(f"{path}: missing '{MODEL_FORMAT}' format marker")
    if obj.get("version") != MODEL_VERSION:
        raise ModelFileError(
            f"{path}: unsupported model version {obj.get('version')!r}, expected {MODEL_VERSION}"
        )
    try:
        pp = obj["params"]
        params = ForestParams(
            n_trees=int(pp["n_trees"]),
            subsample=int(pp["subsample"]),
            seed=int(pp["seed"]),
            aggregate=str(pp["aggregate"]),
            tree=TreeParams(
                min_arm_leaf=int(pp["tree"]["min_arm_leaf"]),
                split_features=int(pp["tree"]["split_features"]),
                max_depth=int(pp["tree"]["max_depth"]),
            ),
        )
        f = Forest(
            trees=[_node_from_obj(t) for t in obj["trees"]],
            params=params,
            p=int(obj["p"]),
            method=str(obj["method"]),
            tree_seeds=[int(b) for b in obj["tree_seeds"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: malformed model file ({exc})") from exc
    validate_forest(f)
    return f


def validate_forest(f: Forest) -> None:
    """Check structural invariants of every tree in the forest."""
    if f.method not in METHODS:
        raise ModelFileError(f"unknown method tag {f.method!r}")
    if len(f.trees) != f.params.n_trees:
        raise ModelFileError(f"expected {f.params.n_trees} trees, found {len(f.trees)}")
    k = f.params.tree.min_arm_leaf

    def _check(node: Node) -> None:
        if isinstance(node, Leaf):
            if node.g != leaf_sign(node.tau_hat):
                raise ModelFileError("leaf sign disagrees with its effect estimate")
            if node.n_treated < k or node.n_control < k:
                raise ModelFileError(f"leaf arm counts below min_arm_leaf={k}")
            return
        if not 0 <= node.feature < f.p:
            raise ModelFileError(f"split feature {node.feature} outside [0, {f.p})")
        if not np.isfinite(node.threshold):
            raise ModelFileError("non-finite split threshold")
        _check(node.left)
        _check(node.right)

    for root in f.trees:
        _check(root)


def plugin_params(params: ForestParams) -> ForestParams:
    """Parameters for the plug-in baseline: same knobs, effect-mean aggregation."""
    return replace(params, aggregate="tau_mean")


def summarize(f: Forest) -> dict:
    """Training summary: depth and leaf-count distribution, arm-count minima."""
    depths = [tree_depth(t) for t in f.trees]
    leaves = [collect_leaves(t) for t in f.trees]
    leaf_counts = [len(ls) for ls in leaves]
    min_arm = min(min(min(l.n_treated, l.n_control) for l in ls) for ls in leaves)
    return {
        "n_trees": f.n_trees,
        "depth_min": min(depths),
        "depth_max": max(depths),
        "leaves_min": min(leaf_counts),
        "leaves_max": max(leaf_counts),
        "min_arm_count": min_arm,
    }
