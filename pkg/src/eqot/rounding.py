"""Primal feasibility recovery: per-agent margins and marginal rounding.

Dual iterates yield plans whose summed row marginal matches ``a`` exactly but
whose column marginal only approximates ``b``.  :func:`margins` splits the
global targets into per-agent pairs (a^k, b^k) compatible with the plans, and
:func:`round_plan` moves each plan the minimal O(residual) L1 distance onto
its target marginals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    EotProblem,
    InfeasibleInput,
    PlanTensor,
    ShapeMismatch,
    StalledRepair,
)

ROW_FEASIBILITY_TOL = 1e-6   # accepted row-marginal slack on margins input
NEGATIVITY_TOL = 1e-14       # floating-point dust never triggers repair failure


@dataclass(frozen=True)
class MarginPair:
    """Per-agent target marginals produced by :func:`margins`.

    Satisfies, for plans ``pi`` with row-feasible sum:
      (i)   a^k >= 0 and b^k >= 0 entrywise;
      (ii)  sum_k a^k = a and sum_k b^k = b;
      (iii) per-agent mass balance sum_i a^k_i = sum_j b^k_j;
      (iv)  for each column j the signs of b^k_j - c(pi^k)_j agree over k.
    """

    a_k: np.ndarray
    b_k: np.ndarray


def _plans_array(plans) -> np.ndarray:
    pi = plans.pi if isinstance(plans, PlanTensor) else np.asarray(plans, dtype=float)
    if pi.ndim != 3:
        raise ShapeMismatch("expected an (N, n, n) plan tensor")
    return pi


def margins(plans, a: np.ndarray, b: np.ndarray) -> MarginPair:
    """Split global marginals (a, b) into per-agent targets (a^k, b^k).

    Requires r(sum_k pi^k) = a up to ``ROW_FEASIBILITY_TOL`` in L1.  Sets
    a^k = r(pi^k) and initializes b^k = c(pi^k) + (b - c(sum_k pi^k)) / N,
    which already satisfies properties (ii)-(iv); negative entries are then
    removed by 2x2 transfers that preserve those properties until (i) holds.
    """
    pi = _plans_array(plans)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    big_n, n = pi.shape[0], pi.shape[1]

    a_k = pi.sum(axis=2)                       # (N, n) row marginals
    col_k = pi.sum(axis=1)                     # (N, n) column marginals
    row_res = float(np.abs(a_k.sum(axis=0) - a).sum())
    if row_res > ROW_FEASIBILITY_TOL:
        raise InfeasibleInput(
            f"row marginal of the summed plan is {row_res:.3g} from a in L1; "
            "margins requires a row-feasible plan"
        )
    if row_res > 1e-8:
        warnings.warn(
            f"margins input row residual {row_res:.3g} exceeds 1e-8; "
            "per-agent masses were rebalanced",
            RuntimeWarning,
        )

    b_k = col_k + (b - col_k.sum(axis=0)) / big_n

    # Each transfer reduces the total negativity by theta > 0; a bounded
    # sweep count only guards against numerically corrupted input.
    max_steps = 10 * big_n * n
    for _ in range(max_steps):
        neg = np.argwhere(b_k < -NEGATIVITY_TOL)
        if neg.size == 0:
            break
        k, j = map(int, neg[0])
        surplus = b_k[k] - col_k[k]
        jp = int(np.argmax(surplus))
        kp = int(np.argmax(b_k[:, j]))
        if surplus[jp] <= 0.0 or b_k[kp, j] <= 0.0:
            raise StalledRepair(
                "no donor column/agent found while negativity persists"
            )
        theta = min(-b_k[k, j], b_k[kp, j], surplus[jp])
        b_k[k, j] += theta
        b_k[k, jp] -= theta
        b_k[kp, j] -= theta
        b_k[kp, jp] += theta
    else:
        raise StalledRepair(f"margin repair did not finish in {max_steps} steps")

    np.clip(b_k, 0.0, None, out=b_k)
    # Per-agent mass balance (iii) to machine precision; a no-op on exact input.
    mass_b = b_k.sum(axis=1)
    mass_a = a_k.sum(axis=1)
    scale = np.where(mass_a > 0.0, mass_b / np.where(mass_a > 0.0, mass_a, 1.0), 1.0)
    a_k = a_k * scale[:, None]
    return MarginPair(a_k=a_k, b_k=b_k)


def round_plan(pi: np.ndarray, a_target: np.ndarray,
               b_target: np.ndarray) -> np.ndarray:
    """Project a nonnegative matrix onto exact marginals (a_target, b_target).

    Scales down the rows and columns that exceed their targets, then restores
    the removed mass with a rank-one correction.  The result satisfies
    ``||out - pi||_1 <= 2 (||r(pi) - a||_1 + ||c(pi) - b||_1)``.
    """
    pi = np.asarray(pi, dtype=float)
    a_target = np.asarray(a_target, dtype=float)
    b_target = np.asarray(b_target, dtype=float)
    if np.any(pi < 0.0) or np.any(a_target < 0.0) or np.any(b_target < 0.0):
        raise InfeasibleInput("round_plan requires nonnegative inputs")
    if abs(a_target.sum() - b_target.sum()) > 1e-10:
        raise InfeasibleInput(
            f"target masses differ: {a_target.sum():.17g} vs {b_target.sum():.17g}"
        )

    rows = pi.sum(axis=1)
    # 0/0 rows scale by 1: an all-zero row stays zero and err_a absorbs a_i.
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(rows > 0.0, np.minimum(a_target / np.where(rows > 0.0, rows, 1.0), 1.0), 1.0)
    pi1 = x[:, None] * pi
    cols = pi1.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(cols > 0.0, np.minimum(b_target / np.where(cols > 0.0, cols, 1.0), 1.0), 1.0)
    pi2 = pi1 * y[None, :]

    # Scaling guarantees err >= 0 in exact arithmetic; clamp rounding dust.
    err_a = np.maximum(a_target - pi2.sum(axis=1), 0.0)
    err_b = np.maximum(b_target - pi2.sum(axis=0), 0.0)
    mass = float(err_a.sum())
    if mass <= 0.0:
        # Nothing was removed, so pi2 is already feasible.
        return pi2
    return pi2 + np.outer(err_a, err_b) / mass


def recover_primal(plans, problem: EotProblem) -> PlanTensor:
    """Margins followed by per-agent rounding; returns a feasible plan tensor.

    The input must come from a row-feasible dual state (the plan right after
    an f-update).  Total movement is at most 2 ||c(sum_k pi^k) - b||_1 plus
    floating-point dust.
    """
    pi = _plans_array(plans)
    pair = margins(pi, problem.a, problem.b)
    out = np.empty_like(pi)
    for k in range(pi.shape[0]):
        out[k] = round_plan(pi[k], pair.a_k[k], pair.b_k[k])
    total = out.sum(axis=0)
    residual = (np.abs(total.sum(axis=1) - problem.a).sum()
                + np.abs(total.sum(axis=0) - problem.b).sum())
    return PlanTensor(pi=out, feasible=bool(residual <= 1e-10))
