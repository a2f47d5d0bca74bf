"""A single honest policy tree.

Splits are placed on one half of the subsample (the split sample) and leaf
effects are estimated on the other (the estimation sample); the two never
mix.  Candidate splits are scored by the size-weighted absolute within-child
effect estimate (negated, so lower is better), every leaf must keep at least
``min_arm_leaf`` treated and control units of the estimation sample, and a
leaf recommends treatment exactly when its estimated effect is nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .data import Dataset, check_index_set


class TrainingError(RuntimeError):
    """Training preconditions violated or training cannot proceed."""


class ArmCoverageError(TrainingError):
    """A required region contains no treated or no control units."""


@dataclass(frozen=True)
class TreeParams:
    """Tree-growing knobs.

    Attributes
    ----------
    min_arm_leaf : int
        Minimum treated count and minimum control count per leaf, measured
        on the estimation sample.
    split_features : int
        Number of candidate split variables drawn at each node (must not
        exceed the covariate dimension of the training data).
    max_depth : int
        Depth cap; nodes at this depth become leaves.
    """

    min_arm_leaf: int = 25
    split_features: int = 3
    max_depth: int = 8

    def __post_init__(self):
        if self.min_arm_leaf < 1:
            raise ValueError(f"min_arm_leaf must be >= 1, got {self.min_arm_leaf}")
        if self.split_features < 1:
            raise ValueError(f"split_features must be >= 1, got {self.split_features}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")


@dataclass(frozen=True)
class Leaf:
    """Terminal node: honest effect estimate, its sign, and est-sample arm counts."""

    tau_hat: float
    g: int
    n_treated: int
    n_control: int


@dataclass(frozen=True)
class Internal:
    """Split node; x[feature] <= threshold routes left."""

    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Internal]


def leaf_sign(tau_hat: float) -> int:
    """Sign rule for the leaf recommendation: 1 if tau_hat >= 0 else -1."""
    if not np.isfinite(tau_hat):
        raise ValueError(f"tau_hat must be finite, got {tau_hat}")
    return 1 if tau_hat >= 0.0 else -1


def _difference_in_means(d: np.ndarray, y: np.ndarray) -> tuple[float, int, int]:
    treated = d == 1
    n_t = int(treated.sum())
    n_c = d.size - n_t
    if n_t == 0 or n_c == 0:
        raise ArmCoverageError(
            f"region has {n_t} treated and {n_c} control units; both arms required"
        )
    tau = float(y[treated].mean() - y[~treated].mean())
    return tau, n_t, n_c


def leaf_tau(rows: np.ndarray, ds: Dataset) -> float:
    """Difference in mean outcomes, treated minus control, over the given rows."""
    rows = check_index_set(rows, ds.n)
    tau, _, _ = _difference_in_means(ds.treatments[rows], ds.outcomes[rows])
    return tau


def riesz_weights(rows: np.ndarray, in_leaf: np.ndarray, ds: Dataset) -> np.ndarray:
    """Per-unit weights over ``rows`` whose average against Y gives the leaf estimate.

    ``in_leaf`` is a boolean mask (aligned with ``rows``) selecting the leaf's
    members; the weighted sum ``mean(weights * Y[rows])`` reproduces the leaf
    difference in means.
    """
    rows = np.asarray(rows)
    d = ds.treatments[rows]
    treated_frac = float(np.mean(in_leaf & (d == 1)))
    control_frac = float(np.mean(in_leaf & (d == 0)))
    if treated_frac == 0.0 or control_frac == 0.0:
        raise ArmCoverageError("leaf needs both arms to carry weights")
    return np.where(d == 1, in_leaf / treated_frac, -(in_leaf / control_frac))


@dataclass(frozen=True)
class ChildStats:
    """Split-sample counts and outcome sums for one child region."""

    n_treated: int
    n_control: int
    sum_y_treated: float
    sum_y_control: float

    @property
    def n(self) -> int:
        return self.n_treated + self.n_control

    @property
    def has_both_arms(self) -> bool:
        return self.n_treated >= 1 and self.n_control >= 1

    def tau(self) -> float:
        if not self.has_both_arms:
            raise ArmCoverageError("child lacks an arm on the split sample")
        return self.sum_y_treated / self.n_treated - self.sum_y_control / self.n_control


@dataclass(frozen=True)
class SplitCandidate:
    """One candidate (feature, threshold) with child statistics.

    Split-sample stats always present; estimation-sample arm counts are
    attached when the estimation rows are supplied.
    """

    feature: int
    threshold: float
    left: ChildStats
    right: ChildStats
    est_left: tuple[int, int] | None = None
    est_right: tuple[int, int] | None = None


def midpoint_thresholds(values: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct sorted values.

    Midpoints that collapse onto the upper neighbour (adjacent floats) are
    dropped so that ``x <= threshold`` reproduces the intended partition.
    """
    xs = np.sort(np.asarray(values, dtype=np.float64))
    if xs.size < 2:
        return np.empty(0)
    gaps = np.nonzero(xs[1:] > xs[:-1])[0]
    thr = 0.5 * (xs[gaps] + xs[gaps + 1])
    return thr[thr < xs[gaps + 1]]


def _child_stats(mask: np.ndarray, d: np.ndarray, y: np.ndarray) -> ChildStats:
    dm = d[mask]
    ym = y[mask]
    treated = dm == 1
    return ChildStats(
        n_treated=int(treated.sum()),
        n_control=int((~treated).sum()),
        sum_y_treated=float(ym[treated].sum()),
        sum_y_control=float(ym[~treated].sum()),
    )


def candidate_splits(split_rows: np.ndarray, ds: Dataset, features: list[int] | np.ndarray,
                     est_rows: np.ndarray | None = None) -> list[SplitCandidate]:
    """Enumerate candidate splits over the sampled features.

    For each feature, thresholds are midpoints between consecutive distinct
    split-sample values, so no candidate produces an empty child on the
    split sample; constant features contribute none.  This is the reference
    enumeration used at desk scale and in tests; growing uses an equivalent
    vectorized path.
    """
    split_rows = check_index_set(split_rows, ds.n)
    d = ds.treatments[split_rows]
    y = ds.outcomes[split_rows]
    d_est = ds.treatments[est_rows] if est_rows is not None else None
    out: list[SplitCandidate] = []
    for f in features:
        xf = ds.covariates[split_rows, f]
        xe = ds.covariates[est_rows, f] if est_rows is not None else None
        for thr in midpoint_thresholds(xf):
            left_mask = xf <= thr
            est_left = est_right = None
            if est_rows is not None:
                le = xe <= thr
                est_left = (int((d_est[le] == 1).sum()), int((d_est[le] == 0).sum()))
                est_right = (int((d_est[~le] == 1).sum()), int((d_est[~le] == 0).sum()))
            out.append(SplitCandidate(
                feature=int(f),
                threshold=float(thr),
                left=_child_stats(left_mask, d, y),
                right=_child_stats(~left_mask, d, y),
                est_left=est_left,
                est_right=est_right,
            ))
    return out


def weighted_abs_tau_score(n_left, n_right, tau_left, tau_right):
    """Policy split score: negative size-weighted absolute child effects (lower wins)."""
    n = n_left + n_right
    return -(n_left * np.abs(tau_left) + n_right * np.abs(tau_right)) / n


def weighted_sq_tau_score(n_left, n_right, tau_left, tau_right):
    """Plug-in split score: negative size-weighted squared child effects (lower wins)."""
    n = n_left + n_right
    return -(n_left * np.square(tau_left) + n_right * np.square(tau_right)) / n


Criterion = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def score_split(c: SplitCandidate, criterion: Criterion = weighted_abs_tau_score) -> float:
    """Score one candidate from its stored split-sample statistics.

    Candidates with a child missing an arm on the split sample are invalid
    and score +inf (skipped, never raised).
    """
    if not (c.left.has_both_arms and c.right.has_both_arms):
        return float("inf")
    return float(criterion(
        np.float64(c.left.n), np.float64(c.right.n),
        np.float64(c.left.tau()), np.float64(c.right.tau()),
    ))


def candidate_is_valid(c: SplitCandidate, min_arm_leaf: int) -> bool:
    """Both arms per child on the split sample and k per arm on the estimation sample."""
    if not (c.left.has_both_arms and c.right.has_both_arms):
        return False
    if c.est_left is None or c.est_right is None:
        return False
    return all(count >= min_arm_leaf for count in (*c.est_left, *c.est_right))


def _best_split_for_feature(x_split, d_split, y_split, x_est, is_treated_est, feature,
                            min_arm_leaf, criterion):
    """Vectorized scan of all thresholds of one feature; returns (score, threshold)."""
    order = np.argsort(x_split, kind="stable")
    xs = x_split[order]
    gaps = np.nonzero(xs[1:] > xs[:-1])[0]
    if gaps.size == 0:
        return None
    thr = 0.5 * (xs[gaps] + xs[gaps + 1])
    keep = thr < xs[gaps + 1]
    gaps, thr = gaps[keep], thr[keep]
    if gaps.size == 0:
        return None

    ds_sorted = d_split[order]
    ys_sorted = y_split[order]
    cum_nt = np.cumsum(ds_sorted == 1)
    cum_nc = np.cumsum(ds_sorted == 0)
    cum_yt = np.cumsum(np.where(ds_sorted == 1, ys_sorted, 0.0))
    cum_yc = np.cumsum(np.where(ds_sorted == 0, ys_sorted, 0.0))

    lt, lc = cum_nt[gaps], cum_nc[gaps]
    rt, rc = cum_nt[-1] - lt, cum_nc[-1] - lc
    valid = (lt >= 1) & (lc >= 1) & (rt >= 1) & (rc >= 1)

    # k-per-arm constraint on the estimation sample.
    xe_treated = np.sort(x_est[is_treated_est])
    xe_control = np.sort(x_est[~is_treated_est])
    elt = np.searchsorted(xe_treated, thr, side="right")
    elc = np.searchsorted(xe_control, thr, side="right")
    valid &= (elt >= min_arm_leaf) & (elc >= min_arm_leaf)
    valid &= (xe_treated.size - elt >= min_arm_leaf) & (xe_control.size - elc >= min_arm_leaf)
    if not valid.any():
        return None

    with np.errstate(divide="ignore", invalid="ignore"):
        tau_l = cum_yt[gaps] / lt - cum_yc[gaps] / lc
        tau_r = (cum_yt[-1] - cum_yt[gaps]) / rt - (cum_yc[-1] - cum_yc[gaps]) / rc
        n_l = (gaps + 1).astype(np.float64)
        n_r = xs.size - n_l
        scores = criterion(n_l, n_r, tau_l, tau_r)
    scores = np.where(valid, scores, np.inf)
    j = int(np.argmin(scores))  # first minimum -> lowest threshold on ties
    if not np.isfinite(scores[j]):
        return None
    return float(scores[j]), float(thr[j]), feature


def _find_best_split(ds, split_idx, est_idx, features, min_arm_leaf, criterion):
    d_split = ds.treatments[split_idx]
    y_split = ds.outcomes[split_idx]
    is_treated_est = ds.treatments[est_idx] == 1
    best = None
    for f in sorted(int(f) for f in features):  # ascending: ties keep the lowest feature
        found = _best_split_for_feature(
            ds.covariates[split_idx, f], d_split, y_split,
            ds.covariates[est_idx, f], is_treated_est, f, min_arm_leaf, criterion,
        )
        if found is not None and (best is None or found[0] < best[0]):
            best = found
    return best


def _make_leaf(est_idx: np.ndarray, ds: Dataset) -> Leaf:
    tau, n_t, n_c = _difference_in_means(ds.treatments[est_idx], ds.outcomes[est_idx])
    return Leaf(tau_hat=tau, g=leaf_sign(tau), n_treated=n_t, n_control=n_c)


def _arm_counts(d: np.ndarray) -> tuple[int, int]:
    return int((d == 1).sum()), int((d == 0).sum())


def grow(split_rows: np.ndarray, est_rows: np.ndarray, ds: Dataset, params: TreeParams,
         rng: np.random.Generator, criterion: Criterion = weighted_abs_tau_score) -> Node:
    """Grow one honest tree.

    At each node, ``split_features`` candidate variables are sampled and the
    valid candidate with the lowest score is taken; score ties break to the
    lowest feature index, then the lowest threshold.  A candidate is valid
    when both children keep at least one unit of each arm on the split
    sample and ``min_arm_leaf`` of each arm on the estimation sample.  Nodes
    with no valid candidate, or at ``max_depth``, become leaves estimated
    from the estimation sample only.
    """
    split_idx = check_index_set(split_rows, ds.n)
    est_idx = check_index_set(est_rows, ds.n)
    k = params.min_arm_leaf
    est_t, est_c = _arm_counts(ds.treatments[est_idx])
    if est_t < k or est_c < k:
        raise TrainingError(
            f"estimation sample needs >= {k} per arm, got {est_t} treated, {est_c} control"
        )
    split_t, split_c = _arm_counts(ds.treatments[split_idx])
    if split_t < 1 or split_c < 1:
        raise TrainingError(
            f"split sample needs both arms, got {split_t} treated, {split_c} control"
        )
    if params.split_features > ds.p:
        raise TrainingError(
            f"split_features={params.split_features} exceeds covariate dimension p={ds.p}"
        )
    return _grow_node(split_idx, est_idx, ds, params, rng, criterion, depth=0)


def _grow_node(split_idx, est_idx, ds, params, rng, criterion, depth):
    best = None
    if depth < params.max_depth:
        features = rng.choice(ds.p, size=params.split_features, replace=False)
        best = _find_best_split(ds, split_idx, est_idx, features,
                                params.min_arm_leaf, criterion)
    if best is None:
        return _make_leaf(est_idx, ds)
    _, thr, f = best
    left_split = ds.covariates[split_idx, f] <= thr
    left_est = ds.covariates[est_idx, f] <= thr
    return Internal(
        feature=f,
        threshold=thr,
        left=_grow_node(split_idx[left_split], est_idx[left_est], ds, params, rng,
                        criterion, depth + 1),
        right=_grow_node(split_idx[~left_split], est_idx[~left_est], ds, params, rng,
                         criterion, depth + 1),
    )


def predict_node(root: Node, x: np.ndarray) -> tuple[float, int]:
    """Route one covariate vector to its leaf; returns (tau_hat, g).

    Values equal to a threshold route left.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single covariate vector, got ndim={x.ndim}")
    node = root
    while isinstance(node, Internal):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.tau_hat, node.g


def route_tree(root: Node, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized routing of an (n, p) matrix; returns (tau_hat, g) arrays."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    tau = np.empty(x.shape[0])
    g = np.empty(x.shape[0], dtype=np.int64)

    def _route(node: Node, idx: np.ndarray) -> None:
        if isinstance(node, Leaf):
            tau[idx] = node.tau_hat
            g[idx] = node.g
            return
        left = x[idx, node.feature] <= node.threshold
        _route(node.left, idx[left])
        _route(node.right, idx[~left])

    _route(root, np.arange(x.shape[0]))
    return tau, g


def reestimate_leaves(root: Node, rows: np.ndarray, ds: Dataset) -> Node:
    """Recompute every leaf from ``rows`` with the partition held fixed.

    Returns a structurally identical tree whose leaf statistics are the
    honest estimates over the rows routed to each leaf.
    """
    rows = check_index_set(rows, ds.n)

    def _rebuild(node: Node, idx: np.ndarray) -> Node:
        if isinstance(node, Leaf):
            return _make_leaf(idx, ds)
        left = ds.covariates[idx, node.feature] <= node.threshold
        return Internal(node.feature, node.threshold,
                        _rebuild(node.left, idx[left]), _rebuild(node.right, idx[~left]))

    return _rebuild(root, rows)


def collect_leaves(root: Node) -> list[Leaf]:
    """Leaves in left-to-right order."""
    if isinstance(root, Leaf):
        return [root]
    return collect_leaves(root.left) + collect_leaves(root.right)


def tree_depth(root: Node) -> int:
    if isinstance(root, Leaf):
        return 0
    return 1 + max(tree_depth(root.left), tree_depth(root.right))
