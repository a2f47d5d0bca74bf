"""Desk-scale brute force linking welfare maximization and sign regression.

Over a finite class of cell-constant policies, enumerating all 2^M candidate
assignments shows that the welfare-maximizing policies, mapped through
g = 2*pi - 1, are exactly the {-1, 1}-restricted least-squares fits to the
unit-level effect.  Both enumerators evaluate their objective directly from
the data so the cross-check is independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MAX_CELLS = 12
TIE_TOL = 1e-12

Policy = tuple[int, ...]


class ClassSizeError(ValueError):
    """The finite policy class exceeds the enumeration cap."""


@dataclass(frozen=True)
class FinitePolicyClass:
    """A partition of sample indices into M cells; policies act cellwise.

    Each of the 2^M policies assigns one action in {0, 1} per cell.  Cells
    must cover every index exactly once; empty cells are permitted.
    """

    cells: tuple[np.ndarray, ...]
    n_units: int

    def __post_init__(self):
        cells = tuple(np.asarray(c, dtype=np.int64) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        if len(cells) > MAX_CELLS:
            raise ClassSizeError(f"{len(cells)} cells exceeds the cap of {MAX_CELLS}")
        flat = np.concatenate(cells) if cells else np.empty(0, dtype=np.int64)
        if flat.size != self.n_units or (
            flat.size and not np.array_equal(np.sort(flat), np.arange(self.n_units))
        ):
            raise ValueError("cells must cover indices 0..n-1 exactly once")

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_policies(self) -> int:
        return 2 ** self.n_cells

    @classmethod
    def from_labels(cls, labels: np.ndarray, n_cells: int | None = None) -> "FinitePolicyClass":
        """Build a class from an integer cell label per unit."""
        labels = np.asarray(labels, dtype=np.int64)
        m = int(labels.max()) + 1 if n_cells is None else n_cells
        cells = tuple(np.nonzero(labels == c)[0] for c in range(m))
        return cls(cells=cells, n_units=labels.size)


def _action_matrix(m: int) -> np.ndarray:
    # Row r is the binary assignment with cell c taking bit c of r.
    codes = np.arange(2**m, dtype=np.int64)
    return (codes[:, None] >> np.arange(m)) & 1


def brute_force_welfare_argmax(pc: FinitePolicyClass, y1: np.ndarray, y0: np.ndarray,
                               tol: float = TIE_TOL) -> set[Policy]:
    """All policies maximizing mean(y1*pi + y0*(1 - pi)) over the 2^M candidates.

    Ties within ``tol`` of the maximum are included.
    """
    y1 = np.asarray(y1, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    if y1.shape != (pc.n_units,) or y0.shape != (pc.n_units,):
        raise ValueError("y1 and y0 must be length-n vectors")
    if pc.n_cells > MAX_CELLS:
        raise ClassSizeError(f"{pc.n_cells} cells exceeds the cap of {MAX_CELLS}")
    sum1 = np.array([y1[c].sum() for c in pc.cells])
    sum0 = np.array([y0[c].sum() for c in pc.cells])
    acts = _action_matrix(pc.n_cells)
    welfare = (acts @ sum1 + (1 - acts) @ sum0) / pc.n_units
    best = welfare.max()
    return {tuple(int(a) for a in acts[i]) for i in np.nonzero(welfare >= best - tol)[0]}


def brute_force_restricted_lsq_argmin(pc: FinitePolicyClass, tau: np.ndarray,
                                      tol: float = TIE_TOL) -> set[Policy]:
    """All g in {-1, 1}^M minimizing mean((tau_i - g(cell(i)))^2), by enumeration.

    The squared error is evaluated directly per cell and candidate value,
    with ties within ``tol`` of the minimum included.
    """
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != (pc.n_units,):
        raise ValueError("tau must be a length-n vector")
    if pc.n_cells > MAX_CELLS:
        raise ClassSizeError(f"{pc.n_cells} cells exceeds the cap of {MAX_CELLS}")
    sse_pos = np.array([((tau[c] - 1.0) ** 2).sum() for c in pc.cells])
    sse_neg = np.array([((tau[c] + 1.0) ** 2).sum() for c in pc.cells])
    acts = _action_matrix(pc.n_cells)
    mse = (acts @ sse_pos + (1 - acts) @ sse_neg) / pc.n_units
    best = mse.min()
    return {
        tuple(2 * int(a) - 1 for a in acts[i]) for i in np.nonzero(mse <= best + tol)[0]
    }


def policy_to_sign(policy: Policy) -> Policy:
    """Map a {0,1} cell assignment to its {-1,1} representation g = 2*pi - 1."""
    return tuple(2 * a - 1 for a in policy)


def check_theorem1(pc: FinitePolicyClass, y1: np.ndarray, y0: np.ndarray,
                   tol: float = TIE_TOL,
                   corrupt: Callable[[set[Policy]], set[Policy]] | None = None) -> bool:
    """True iff the sign-mapped welfare argmax set equals the LSQ argmin set.

    The least-squares side regresses the unit-level contrast tau = y1 - y0.
    ``corrupt`` is a debug hook applied to the mapped welfare set before
    comparison, used to confirm the check can fail.
    """
    welfare_set = brute_force_welfare_argmax(pc, y1, y0, tol=tol)
    mapped = {policy_to_sign(p) for p in welfare_set}
    if corrupt is not None:
        mapped = corrupt(mapped)
    lsq_set = brute_force_restricted_lsq_argmin(pc, np.asarray(y1) - np.asarray(y0), tol=tol)
    return mapped == lsq_set


@dataclass
class SuiteResult:
    """Outcome of a randomized equivalence suite run."""

    trials: int
    failures: list[int] = field(default_factory=list)

    @property
    def passed(self) -> int:
        return self.trials - len(self.failures)

    @property
    def ok(self) -> bool:
        return not self.failures


def random_instance(rng: np.random.Generator, max_cells: int = 8,
                    min_units: int = 4, max_units: int = 64):
    """Draw one random instance (class, y1, y0) for the equivalence suite."""
    m = int(rng.integers(1, max_cells + 1))
    n = int(rng.integers(min_units, max_units + 1))
    labels = rng.integers(0, m, size=n)
    pc = FinitePolicyClass.from_labels(labels, n_cells=m)
    y1 = rng.standard_normal(n)
    y0 = rng.standard_normal(n)
    return pc, y1, y0


def run_equivalence_suite(trials: int, seed: int,
                          corrupt: Callable[[set[Policy]], set[Policy]] | None = None,
                          ) -> SuiteResult:
    """Run ``trials`` random equivalence checks; record the failing trial indices."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    result = SuiteResult(trials=trials)
    for t in range(trials):
        pc, y1, y0 = random_instance(rng)
        if not check_theorem1(pc, y1, y0, corrupt=corrupt):
            result.failures.append(t)
    return result
