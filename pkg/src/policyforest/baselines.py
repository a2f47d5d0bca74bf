"""Comparison methods: the oracle first-best policy and a plug-in forest.

The plug-in baseline reuses the whole training pipeline but scores splits by
the size-weighted squared child effect (the unrestricted squared-error
criterion) and converts the forest-averaged effect estimate into a policy by
thresholding at zero.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .forest import Forest, ForestParams, plugin_params, train
from .synth import SyntheticDataset, true_first_best


def oracle_policy(sd: SyntheticDataset) -> np.ndarray:
    """The first-best assignment: treat iff the true effect is nonnegative."""
    return true_first_best(sd)


def train_plugin_forest(ds: Dataset, params: ForestParams,
                        threads: int | None = None) -> Forest:
    """Train the plug-in causal-forest baseline.

    Identical pipeline to the policy forest except for the split score and
    the aggregation: leaves keep their real-valued effect estimates and the
    downstream policy thresholds the forest-averaged estimate at zero
    (``aggregate="tau_mean"``).
    """
    return train(ds, plugin_params(params), method="plugin", threads=threads)
