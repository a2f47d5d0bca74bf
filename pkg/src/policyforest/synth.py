"""Synthetic observational data with known ground truth.

The generator produces confounded treatment assignment through a logistic
propensity in the first covariate, treatment-effect heterogeneity in the
first two covariates, and an additive baseline, so learned policies can be
scored against the true effect function.

All randomness flows through numpy's counter-based Philox generator seeded
with a ``SeedSequence``; identical configs reproduce bit-identical samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    CsvSchema,
    Dataset,
    SchemaError,
    _parse_float,
    _parse_treatment,
    read_csv_columns,
    save_csv,
    validate,
)

TRUTH_COLUMNS = ("tau0", "e", "y0", "y1")


@dataclass(frozen=True)
class DgpConfig:
    """Configuration of the data-generating process.

    Attributes
    ----------
    n : int
        Sample size (>= 1).
    p : int
        Covariate dimension (>= 2; the effect function uses two coordinates).
    epsilon : float
        Overlap floor: propensities live in [epsilon, 1 - epsilon], 0 < epsilon < 0.5.
    noise_sd : float
        Outcome noise standard deviation (>= 0), shared between both potential
        outcomes of a unit.
    seed : int
        64-bit seed; fully determines the draw.
    """

    n: int
    p: int = 10
    epsilon: float = 0.1
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.p < 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must be in (0, 0.5), got {self.epsilon}")
        if not self.noise_sd >= 0.0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit non-negative integer")


@dataclass(frozen=True)
class SyntheticDataset:
    """A Dataset plus per-unit ground truth from the generator.

    ``base.outcomes[i]`` equals ``y1[i]`` when treated and ``y0[i]`` otherwise,
    exactly; ``tau0`` is the true conditional effect at each unit's covariates.
    """

    base: Dataset
    tau0: np.ndarray
    propensity: np.ndarray
    y0: np.ndarray
    y1: np.ndarray

    def __post_init__(self):
        for name in ("tau0", "propensity", "y0", "y1"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.base.n


def _logistic(z: np.ndarray) -> np.ndarray:
    # Numerically stable on both tails; never overflows.
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def true_effect(x: np.ndarray) -> np.ndarray:
    """True conditional effect: x_1 + x_2 * 1[x_2 > 0] (first two coordinates)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return x[:, 0] + x[:, 1] * (x[:, 1] > 0.0)


def true_propensity(x: np.ndarray, epsilon: float) -> np.ndarray:
    """Treatment probability: epsilon + (1 - 2*epsilon) * logistic(x_1)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return epsilon + (1.0 - 2.0 * epsilon) * _logistic(x[:, 0])


def baseline_outcome(x: np.ndarray) -> np.ndarray:
    """Untreated conditional mean 0.5 * x_3; zero when p < 3."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] >= 3:
        return 0.5 * x[:, 2]
    return np.zeros(x.shape[0])


def generate(cfg: DgpConfig) -> SyntheticDataset:
    """Draw a synthetic sample with ground truth attached.

    Covariates are iid standard normal, treatment is Bernoulli in the
    clipped-logistic propensity of the first covariate, and both potential
    outcomes share one Gaussian noise draw per unit, so the unit-level
    contrast y1 - y0 equals the true effect exactly.

    Draw order (fixed for reproducibility): covariates, assignment uniforms,
    outcome noise.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    x = rng.standard_normal((cfg.n, cfg.p))
    u = rng.random(cfg.n)
    noise = rng.standard_normal(cfg.n) * cfg.noise_sd

    e = true_propensity(x, cfg.epsilon)
    d = (u < e).astype(np.int64)
    tau0 = true_effect(x)
    b = baseline_outcome(x)
    y0 = b + noise
    y1 = b + tau0 + noise
    y = np.where(d == 1, y1, y0)

    base = Dataset(covariates=x, treatments=d, outcomes=y)
    validate(base)
    return SyntheticDataset(base=base, tau0=tau0, propensity=e, y0=y0, y1=y1)


def true_first_best(sd: SyntheticDataset) -> np.ndarray:
    """The first-best assignment: treat unit i iff tau0[i] >= 0 (ties treat)."""
    return (sd.tau0 >= 0.0).astype(np.int64)


def save_synthetic_csv(sd: SyntheticDataset, path: str | Path,
                       schema: CsvSchema = CsvSchema()) -> None:
    """Dump the sample to CSV with ground-truth columns tau0, e, y0, y1."""
    extra = dict(zip(TRUTH_COLUMNS, (sd.tau0, sd.propensity, sd.y0, sd.y1)))
    save_csv(sd.base, path, schema=schema, extra=extra)


def load_synthetic_csv(path: str | Path, schema: CsvSchema = CsvSchema()) -> SyntheticDataset:
    """Load a ground-truth CSV written by :func:`save_synthetic_csv`.

    Raises
    ------
    SchemaError
        A role column or any of the truth columns tau0, e, y0, y1 is missing.
    """
    header, rows = read_csv_columns(path)
    positions = {name: i for i, name in enumerate(header)}
    missing = [c for c in TRUTH_COLUMNS if c not in positions]
    if missing:
        raise SchemaError(f"{path}: missing ground-truth columns {missing}")
    for role, name in (("outcome", schema.outcome), ("treatment", schema.treatment)):
        if name not in positions:
            raise SchemaError(f"{path}: missing {role} column '{name}'")
    reserved = set(TRUTH_COLUMNS) | {schema.outcome, schema.treatment}
    if schema.covariates is None:
        cov_names = [c for c in header if c not in reserved]
    else:
        cov_names = list(schema.covariates)
        for name in cov_names:
            if name not in positions:
                raise SchemaError(f"{path}: missing covariate column '{name}'")
    if not cov_names:
        raise SchemaError(f"{path}: no covariate columns")

    n = len(rows)
    x = np.empty((n, len(cov_names)), dtype=np.float64)
    d = np.empty(n, dtype=np.int64)
    y = np.empty(n, dtype=np.float64)
    truth = {c: np.empty(n, dtype=np.float64) for c in TRUTH_COLUMNS}
    for i, row in enumerate(rows):
        rownum = i + 1
        for j, name in enumerate(cov_names):
            x[i, j] = _parse_float(row[positions[name]], rownum, name)
        d[i] = _parse_treatment(row[positions[schema.treatment]], rownum, schema.treatment)
        y[i] = _parse_float(row[positions[schema.outcome]], rownum, schema.outcome)
        for name in TRUTH_COLUMNS:
            truth[name][i] = _parse_float(row[positions[name]], rownum, name)

    base = Dataset(covariates=x, treatments=d, outcomes=y)
    validate(base)
    return SyntheticDataset(base=base, tau0=truth["tau0"], propensity=truth["e"],
                            y0=truth["y0"], y1=truth["y1"])
