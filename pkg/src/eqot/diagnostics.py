"""Optimality certificates and run metrics.

The headline check is :func:`duality_gap`: the worst per-agent cost of a
feasible plan tensor minus the best attainable weighted cost at the reported
agent weights.  The weighted subproblem collapses to a single transportation
LP because only the summed plan is constrained, so optimal mass at each cell
goes to the agent with the cheapest weighted cost there.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import (
    EotError,
    EotProblem,
    InfeasibleInput,
    PlanTensor,
    SizeLimit,
)
from .rounding import round_plan

EXACT_SIZE_LIMIT = 512


def _plans_array(plans) -> np.ndarray:
    return plans.pi if isinstance(plans, PlanTensor) else np.asarray(plans, dtype=float)


def agent_costs(plans, problem: EotProblem) -> np.ndarray:
    """Per-agent transport costs <pi^k, C^k>."""
    pi = _plans_array(plans)
    return (pi * problem.costs).sum(axis=(1, 2))


def primal_value(plans, lam: np.ndarray, problem: EotProblem) -> float:
    """Weighted objective sum_k lam_k <pi^k, C^k>."""
    return float(np.asarray(lam, dtype=float) @ agent_costs(plans, problem))


def max_over_lambda(plans, problem: EotProblem) -> tuple[float, int]:
    """Worst per-agent cost and the (0-based) index of the first agent attaining it."""
    costs = agent_costs(plans, problem)
    k = int(np.argmax(costs))
    return float(costs[k]), k


def transport_lp(a: np.ndarray, b: np.ndarray, cost: np.ndarray,
                 return_plan: bool = False):
    """Exact transportation LP min <P, cost> over P >= 0, r(P) = a, c(P) = b.

    Transportation simplex with a northwest-corner start.  Entering cells are
    chosen by the most-negative reduced cost; a run of degenerate pivots
    switches to Bland's least-index rule, which guarantees termination.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if a.shape != (n,) or b.shape != (m,):
        raise InfeasibleInput("marginal lengths do not match the cost matrix")
    if max(n, m) > EXACT_SIZE_LIMIT:
        raise SizeLimit(f"exact method limited to n <= {EXACT_SIZE_LIMIT}")
    if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, a.sum()):
        raise InfeasibleInput("supplies and demands must balance")

    # Northwest-corner initial basis: exactly n + m - 1 cells, some possibly zero.
    flow = np.zeros((n, m))
    basis = np.zeros((n, m), dtype=bool)
    ra, rb = a.copy(), b.copy()
    i = j = 0
    while True:
        q = min(ra[i], rb[j])
        flow[i, j] = q
        basis[i, j] = True
        ra[i] -= q
        rb[j] -= q
        if i == n - 1 and j == m - 1:
            break
        if ra[i] <= rb[j] and i < n - 1:
            i += 1
        elif j < m - 1:
            j += 1
        else:
            i += 1

    tol = 1e-11 * max(1.0, float(np.abs(cost).max()))
    max_pivots = 50 * n * m + 1000
    degenerate_streak = 0

    for _ in range(max_pivots):
        # Dual prices from the basis tree (nodes: rows 0..n-1, cols n..n+m-1).
        u = np.full(n, np.nan)
        v = np.full(m, np.nan)
        u[0] = 0.0
        rows_of_col = [np.nonzero(basis[:, jj])[0] for jj in range(m)]
        cols_of_row = [np.nonzero(basis[ii, :])[0] for ii in range(n)]
        queue = deque([("r", 0)])
        while queue:
            kind, idx = queue.popleft()
            if kind == "r":
                for jj in cols_of_row[idx]:
                    if np.isnan(v[jj]):
                        v[jj] = cost[idx, jj] - u[idx]
                        queue.append(("c", jj))
            else:
                for ii in rows_of_col[idx]:
                    if np.isnan(u[ii]):
                        u[ii] = cost[ii, idx] - v[idx]
                        queue.append(("r", ii))

        reduced = cost - u[:, None] - v[None, :]
        reduced[basis] = 0.0
        if degenerate_streak > 2 * (n + m):
            candidates = np.argwhere(reduced < -tol)
            if candidates.size == 0:
                break
            ei, ej = map(int, candidates[0])   # Bland: least index, row-major
        else:
            ei, ej = np.unravel_index(int(np.argmin(reduced)), reduced.shape)
            if reduced[ei, ej] >= -tol:
                break

        # Unique tree path from row ei to column ej; with the entering cell it
        # closes the pivot cycle.  Signs alternate starting with + on entry.
        parent: dict[tuple[str, int], tuple[str, int]] = {}
        queue = deque([("r", ei)])
        seen = {("r", ei)}
        while queue:
            kind, idx = queue.popleft()
            if (kind, idx) == ("c", ej):
                break
            neighbors = (
                [("c", jj) for jj in cols_of_row[idx]] if kind == "r"
                else [("r", ii) for ii in rows_of_col[idx]]
            )
            for node in neighbors:
                if node not in seen:
                    seen.add(node)
                    parent[node] = (kind, idx)
                    queue.append(node)
        path = [("c", ej)]
        while path[-1] != ("r", ei):
            path.append(parent[path[-1]])
        path.reverse()

        minus_cells = []
        plus_cells = []
        sign = -1
        for (k1, i1), (k2, i2) in zip(path, path[1:]):
            cell = (i1, i2) if k1 == "r" else (i2, i1)
            (minus_cells if sign < 0 else plus_cells).append(cell)
            sign = -sign
        theta = min(flow[c] for c in minus_cells)
        leaving = next(c for c in minus_cells if flow[c] <= theta)

        flow[ei, ej] += theta
        for c in plus_cells:
            flow[c] += theta
        for c in minus_cells:
            flow[c] -= theta
        flow[leaving] = 0.0
        basis[leaving] = False
        basis[ei, ej] = True
        degenerate_streak = degenerate_streak + 1 if theta <= 1e-15 else 0
    else:
        raise EotError("transportation simplex exceeded its pivot budget")

    value = float((flow * cost).sum())
    if return_plan:
        return value, np.maximum(flow, 0.0)
    return value


def _sinkhorn_plan(a: np.ndarray, b: np.ndarray, cost: np.ndarray, eta: float,
                   max_iters: int = 20_000, tol: float = 1e-12) -> np.ndarray:
    """Log-domain matrix scaling toward marginals (a, b); returns the plan."""
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)
    k_log = -cost / eta
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    for _ in range(max_iters):
        h = k_log + g[None, :]
        m = h.max(axis=1)
        f = log_a - (m + np.log(np.exp(h - m[:, None]).sum(axis=1)))
        f[np.isneginf(log_a)] = -np.inf
        h = k_log + f[:, None]
        m = h.max(axis=0)
        g = log_b - (m + np.log(np.exp(h - m[None, :]).sum(axis=0)))
        plan = np.exp(f[:, None] + k_log + g[None, :])
        if np.abs(plan.sum(axis=1) - a).sum() <= tol:
            break
    return np.exp(f[:, None] + k_log + g[None, :])


def weighted_cost_floor(lam: np.ndarray, problem: EotProblem) -> np.ndarray:
    """Cell-wise cheapest weighted cost M_ij = min_k lam_k C^k_ij."""
    lam = np.asarray(lam, dtype=float)
    return (lam[:, None, None] * problem.costs).min(axis=0)


def min_over_pi(lam: np.ndarray, problem: EotProblem, method: str = "exact",
                eta_prime: float | None = None,
                epsilon: float | None = None) -> float:
    """Best attainable weighted objective min over feasible plan tensors.

    ``method="exact"`` solves the reduced transportation LP (n <= 512).
    ``method="entropic"`` returns a certified lower bound: the cost of a
    rounded entropic plan minus the entropy slack eta' (log(n^2) + 1), with
    eta' defaulting to epsilon / 10.
    """
    m_cost = weighted_cost_floor(lam, problem)
    if method == "exact":
        return transport_lp(problem.a, problem.b, m_cost)
    if method != "entropic":
        raise EotError(f"unknown method {method!r}")
    if eta_prime is None:
        if epsilon is not None:
            eta_prime = epsilon / 10.0
        else:
            eta_prime = max(problem.c_inf, 1.0) * 1e-3
    plan = _sinkhorn_plan(problem.a, problem.b, m_cost, eta_prime)
    feasible = round_plan(plan, problem.a, problem.b)
    slack = eta_prime * (math.log(problem.n ** 2) + 1.0)
    return float((feasible * m_cost).sum()) - slack


@dataclass(frozen=True)
class GapReport:
    """Duality-gap certificate for a feasible plan tensor and weights.

    ``gap <= epsilon`` certifies an epsilon-optimal solution.  ``spread`` is
    the difference between the largest and smallest per-agent cost; at an
    exact optimum with same-sign costs it is zero.
    """

    upper: float
    lower: float
    gap: float
    spread: float
    argmax_agent: int
    agent_costs: np.ndarray
    method: str


def duality_gap(plans, lam: np.ndarray, problem: EotProblem,
                method: str = "exact", eta_prime: float | None = None,
                epsilon: float | None = None) -> GapReport:
    """Certified duality gap of (plans, lam); see :class:`GapReport`."""
    costs = agent_costs(plans, problem)
    k = int(np.argmax(costs))
    upper = float(costs[k])
    lower = min_over_pi(lam, problem, method=method, eta_prime=eta_prime,
                        epsilon=epsilon)
    return GapReport(
        upper=upper, lower=lower, gap=upper - lower,
        spread=float(costs.max() - costs.min()), argmax_agent=k,
        agent_costs=costs, method=method,
    )


def eot_error(plans, lam: np.ndarray, problem: EotProblem,
              ell_star: float) -> float:
    """|weighted objective - reference value|.

    The reference is itself an approximation (a long reference run), so this
    metric inherits that bias; prefer :func:`duality_gap` for certification.
    """
    return abs(primal_value(plans, lam, problem) - ell_star)


def g_range_check(g: np.ndarray, problem: EotProblem, eta: float) -> bool:
    """True when max_j g_j - min_j g_j <= c_inf - eta * iota (1e-9 slack)."""
    g = np.asarray(g, dtype=float)
    return bool(g.max() - g.min() <= problem.c_inf - eta * problem.iota + 1e-9)
