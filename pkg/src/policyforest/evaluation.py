"""Policy evaluation: ground-truth value and regret, and IPW welfare.

On synthetic data the value of an assignment is the sample mean of
``tau0 * assign`` — the welfare gain over treating nobody — and regret is the
gap to the first-best value.  For data without ground truth but with known
propensities, an inverse-probability-weighted welfare estimate is provided.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, LengthMismatchError
from .synth import SyntheticDataset, true_first_best


class PropensityError(ValueError):
    """A propensity is outside the open interval (0, 1)."""


@dataclass(frozen=True)
class EvalRow:
    """One method's scores.

    ``policy_value`` is the all-units mean of tau0 * assign (welfare gain over
    all-control); ``mean_tau_treated`` is the mean of tau0 among units the
    policy assigns to treatment (NaN when it treats nobody).  Regret uses the
    welfare-gain definition.
    """

    method: str
    policy_value: float
    regret: float
    treated_fraction: float
    mean_tau_treated: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]

    @property
    def oracle(self) -> EvalRow:
        return self.rows[0]


def oracle_policy_value(assign: np.ndarray, sd: SyntheticDataset) -> float:
    """Sample welfare gain of an assignment over the all-control policy."""
    assign = np.asarray(assign)
    if assign.shape != (sd.n,):
        raise LengthMismatchError(f"assignment length {assign.shape} != n={sd.n}")
    return float(np.mean(sd.tau0 * assign))


def regret(value: float, oracle_value: float) -> float:
    """Welfare gap to the best policy: oracle_value - value."""
    return oracle_value - value


def mean_effect_among_treated(assign: np.ndarray, sd: SyntheticDataset) -> float:
    """Mean true effect over the units the assignment treats (NaN if none)."""
    assign = np.asarray(assign)
    treated = assign == 1
    if not treated.any():
        return float("nan")
    return float(sd.tau0[treated].mean())


def ipw_pseudo_outcomes(ds: Dataset, propensity: np.ndarray) -> np.ndarray:
    """Per-unit IPW contrast D*Y/e - (1-D)*Y/(1-e); its mean estimates the ATE."""
    e = _checked_propensity(propensity, ds.n)
    d = np.asarray(ds.treatments)
    y = ds.outcomes
    return np.where(d == 1, y / e, -(y / (1.0 - e)))


def _checked_propensity(propensity: np.ndarray, n: int) -> np.ndarray:
    e = np.asarray(propensity, dtype=np.float64)
    if e.shape != (n,):
        raise LengthMismatchError(f"propensity length {e.shape} != n={n}")
    if not np.all((e > 0.0) & (e < 1.0)):
        raise PropensityError("propensities must lie strictly inside (0, 1)")
    return e


def ipw_welfare(assign: np.ndarray, ds: Dataset, propensity: np.ndarray) -> float:
    """Unbiased welfare estimate under known propensities.

    Averages ``assign*D*Y/e + (1-assign)*(1-D)*Y/(1-e)``: each unit whose
    observed arm matches the policy's recommendation contributes its
    reweighted outcome.
    """
    e = _checked_propensity(propensity, ds.n)
    assign = np.asarray(assign)
    if assign.shape != (ds.n,):
        raise LengthMismatchError(f"assignment length {assign.shape} != n={ds.n}")
    d = np.asarray(ds.treatments)
    y = ds.outcomes
    contrib = assign * (d == 1) * y / e + (1 - assign) * (d == 0) * y / (1.0 - e)
    return float(contrib.mean())


def ipw_welfare_gain(assign: np.ndarray, ds: Dataset,
                     propensity: np.ndarray) -> tuple[float, float]:
    """IPW welfare gain over all-control, with its Monte-Carlo standard error."""
    psi = ipw_pseudo_outcomes(ds, propensity)
    contrib = np.asarray(assign) * psi
    se = float(contrib.std(ddof=1) / np.sqrt(ds.n)) if ds.n > 1 else float("nan")
    return float(contrib.mean()), se


ORACLE_METHOD = "Oracle policy"


def build_report(policies: list[tuple[str, np.ndarray]], sd: SyntheticDataset) -> EvalReport:
    """Score each named assignment against ground truth; the oracle row comes first.

    Every row's regret is exactly the oracle value minus the row value, so
    the oracle row has regret exactly 0.
    """
    oracle_assign = true_first_best(sd)
    oracle_value = oracle_policy_value(oracle_assign, sd)
    rows = [EvalRow(
        method=ORACLE_METHOD,
        policy_value=oracle_value,
        regret=oracle_value - oracle_value,
        treated_fraction=float(np.mean(oracle_assign)),
        mean_tau_treated=mean_effect_among_treated(oracle_assign, sd),
    )]
    for name, assign in policies:
        value = oracle_policy_value(assign, sd)
        rows.append(EvalRow(
            method=name,
            policy_value=value,
            regret=oracle_value - value,
            treated_fraction=float(np.mean(np.asarray(assign))),
            mean_tau_treated=mean_effect_among_treated(assign, sd),
        ))
    return EvalReport(rows=tuple(rows))


_COLUMNS = ("method", "policy_value", "regret", "treated_fraction", "mean_tau_treated")


def format_table(report: EvalReport) -> str:
    """Aligned text table: Method, Policy value, Regret, and the extra columns."""
    headers = ("Method", "Policy value", "Regret", "Treated frac", "Mean CATE (treated)")
    body = [
        (r.method, f"{r.policy_value:.4f}", f"{r.regret:.4f}",
         f"{r.treated_fraction:.4f}", f"{r.mean_tau_treated:.4f}")
        for r in report.rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in body:
        lines.append("  ".join(
            row[i].ljust(widths[i]) if i == 0 else row[i].rjust(widths[i])
            for i in range(len(row))
        ))
    return "\n".join(lines)


def report_to_csv(report: EvalReport) -> str:
    """Machine-readable CSV with full-precision values."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for r in report.rows:
        writer.writerow([r.method, repr(r.policy_value), repr(r.regret),
                         repr(r.treated_fraction), repr(r.mean_tau_treated)])
    return buf.getvalue()


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(report_to_csv(report), encoding="utf-8")
