"""Policy learning from observational data with honest causal-policy forests."""

from .data import CsvSchema, DataError, Dataset, load_csv, save_csv, validate
from .equivalence import (
    FinitePolicyClass,
    brute_force_restricted_lsq_argmin,
    brute_force_welfare_argmax,
    check_theorem1,
    run_equivalence_suite,
)
from .forest import (
    Forest,
    ForestParams,
    load,
    predict_policy,
    predict_tau_mean,
    predict_vote,
    save,
    train,
)
from .baselines import oracle_policy, train_plugin_forest
from .evaluation import (
    EvalReport,
    EvalRow,
    build_report,
    ipw_welfare,
    oracle_policy_value,
    regret,
)
from .synth import DgpConfig, SyntheticDataset, generate, true_first_best
from .tree import TrainingError, TreeParams, grow, leaf_sign, leaf_tau, predict_node

__version__ = "0.1.0"

__all__ = [
    "CsvSchema", "DataError", "Dataset", "load_csv", "save_csv", "validate",
    "FinitePolicyClass", "brute_force_welfare_argmax", "brute_force_restricted_lsq_argmin",
    "check_theorem1", "run_equivalence_suite",
    "Forest", "ForestParams", "train", "predict_vote", "predict_tau_mean", "predict_policy",
    "save", "load",
    "oracle_policy", "train_plugin_forest",
    "EvalReport", "EvalRow", "build_report", "ipw_welfare", "oracle_policy_value", "regret",
    "DgpConfig", "SyntheticDataset", "generate", "true_first_best",
    "TrainingError", "TreeParams", "grow", "leaf_sign", "leaf_tau", "predict_node",
    "__version__",
]
