"""Brute-force ground truth for tiny instances.

The feasible set for two points and two agents has five free coordinates
once the three independent coupling constraints are eliminated: one for the
summed plan and four for how each cell is split between the agents.  A dense
grid over those coordinates bounds the optimal value to within the cost
scale times the grid cell diameter.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import EotProblem, InfeasibleInput, PlanTensor, TooLarge


@dataclass(frozen=True)
class GridSpec:
    """Resolution and size caps for the grid oracle.

    ``resolution`` is the number of grid points per free dimension; the
    refinement pass reuses it on a cell shrunk by ``refine_factor``.  Full
    grid search is capped at n <= 2, N <= 2 and ``max_points`` evaluations;
    vertex enumeration is capped at n <= 4.
    """

    resolution: int = 21
    refine_factor: int = 10
    max_points: float = 1e8
    max_n_grid: int = 2
    max_agents_grid: int = 2
    max_n_vertices: int = 4


@dataclass(frozen=True)
class OracleResult:
    value: float
    plans: PlanTensor
    lam: np.ndarray
    error_bound: float


def _summed_plan(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    return np.array([[s, a[0] - s], [b[0] - s, a[1] - b[0] + s]])


def _split_bounds(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    return max(0.0, a[0] + b[0] - 1.0), min(a[0], b[0])


def _axis(lo: float, hi: float, count: int) -> np.ndarray:
    if hi - lo <= 0.0:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def _check_caps(problem: EotProblem, grid: GridSpec) -> None:
    if problem.n > grid.max_n_grid or problem.n_agents > grid.max_agents_grid:
        raise TooLarge(
            f"grid oracle supports n <= {grid.max_n_grid} and "
            f"N <= {grid.max_agents_grid}"
        )


def _grid_minimum(problem, grid, weight, s_axis, t_axis):
    """Minimize over the plan grid; ``weight`` is None for the minimax
    objective or the agent weights for the weighted one."""
    a, b = problem.a, problem.b
    costs = problem.costs
    big_n = problem.n_agents
    best = (np.inf, None, None)
    if big_n == 1:
        for s in s_axis:
            total = _summed_plan(a, b, s)
            val = float((total * costs[0]).sum())
            if val < best[0]:
                best = (val, float(s), None)
        return best
    t_grid = np.array(list(itertools.product(t_axis, repeat=4)))
    for s in s_axis:
        total = _summed_plan(a, b, s).ravel()
        u1 = total * costs[0].ravel()
        u2 = total * costs[1].ravel()
        cost1 = t_grid @ u1
        cost2 = u2.sum() - t_grid @ u2
        if weight is None:
            vals = np.maximum(cost1, cost2)
        else:
            vals = weight[0] * cost1 + weight[1] * cost2
        idx = int(np.argmin(vals))
        if vals[idx] < best[0]:
            best = (float(vals[idx]), float(s), t_grid[idx].copy())
    return best


def _plans_from_params(problem, s, t):
    total = _summed_plan(problem.a, problem.b, s)
    if problem.n_agents == 1:
        return total[None, :, :]
    split = t.reshape(2, 2)
    return np.stack([split * total, (1.0 - split) * total])


def _run_grid(problem: EotProblem, grid: GridSpec,
              weight: np.ndarray | None):
    a, b = problem.a, problem.b
    lo, hi = _split_bounds(a, b)
    res = grid.resolution
    s_axis = _axis(lo, hi, res)
    t_axis = _axis(0.0, 1.0, res) if problem.n_agents == 2 else np.array([0.0])
    points = len(s_axis) * len(t_axis) ** (4 if problem.n_agents == 2 else 0)
    if points > grid.max_points:
        raise TooLarge(f"grid would need {points:.3g} evaluations")

    ds = (hi - lo) / (res - 1) if hi > lo else 0.0
    dt = 1.0 / (res - 1) if problem.n_agents == 2 else 0.0
    # The minimax objective moves by at most c_inf per unit of plan L1
    # distance; one grid cell spans at most 4*ds + 2*dt in that metric.
    bound = problem.c_inf * (4.0 * ds + 2.0 * dt)

    value, s_best, t_best = _grid_minimum(problem, grid, weight, s_axis, t_axis)

    f = grid.refine_factor
    s_axis2 = _axis(max(lo, s_best - ds), min(hi, s_best + ds), 2 * f + 1)
    if problem.n_agents == 2:
        t_axis2 = None  # refined per-dimension grid below
        lows = np.maximum(t_best - dt, 0.0)
        highs = np.minimum(t_best + dt, 1.0)
        axes = [np.linspace(lows[i], highs[i], 2 * f + 1) for i in range(4)]
        t_grid = np.array(list(itertools.product(*axes)))
        best2 = (value, s_best, t_best)
        for s in s_axis2:
            total = _summed_plan(a, b, s).ravel()
            u1 = total * problem.costs[0].ravel()
            u2 = total * problem.costs[1].ravel()
            cost1 = t_grid @ u1
            cost2 = u2.sum() - t_grid @ u2
            if weight is None:
                vals = np.maximum(cost1, cost2)
            else:
                vals = weight[0] * cost1 + weight[1] * cost2
            idx = int(np.argmin(vals))
            if vals[idx] < best2[0]:
                best2 = (float(vals[idx]), float(s), t_grid[idx].copy())
        value, s_best, t_best = best2
    else:
        value2, s_best2, _ = _grid_minimum(problem, grid, weight, s_axis2,
                                           np.array([0.0]))
        if value2 < value:
            value, s_best = value2, s_best2

    return value, s_best, t_best, bound


def brute_saddle(problem: EotProblem, grid: GridSpec | None = None) -> OracleResult:
    """Grid-search the minimax value min over plans of max_k <pi^k, C^k>.

    Returns the best plan found, a one-hot weight vector on the first
    worst-cost agent, and an error bound of c_inf times the coarse grid cell
    L1 diameter (the refinement pass tightens the value, not the bound).
    """
    grid = grid or GridSpec()
    _check_caps(problem, grid)
    value, s_best, t_best, bound = _run_grid(problem, grid, weight=None)
    pi = _plans_from_params(problem, s_best, t_best)
    pi = np.maximum(pi, 0.0)
    costs_k = (pi * problem.costs).sum(axis=(1, 2))
    lam = np.zeros(problem.n_agents)
    lam[int(np.argmax(costs_k))] = 1.0
    return OracleResult(value=value, plans=PlanTensor(pi=pi), lam=lam,
                        error_bound=bound)


def brute_min_weighted(problem: EotProblem, lam: np.ndarray,
                       grid: GridSpec | None = None) -> tuple[float, float]:
    """Grid minimum of the lam-weighted objective; returns (value, error bound)."""
    grid = grid or GridSpec()
    _check_caps(problem, grid)
    lam = np.asarray(lam, dtype=float)
    value, _, _, bound = _run_grid(problem, grid, weight=lam)
    return value, bound


def enumerate_transport_vertices(a, b, cost) -> float:
    """Exact transportation LP value by enumerating basic feasible solutions.

    Every vertex of the transportation polytope is the flow of some spanning
    tree of the supply/demand bipartite graph, so scanning all edge subsets
    of tree size and keeping the nonnegative ones finds the optimum.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n, m = a.shape[0], b.shape[0]
    if cost.shape != (n, m):
        raise InfeasibleInput("cost shape does not match the marginals")
    if max(n, m) > 4:
        raise TooLarge("vertex enumeration limited to n <= 4")
    if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, a.sum()):
        raise InfeasibleInput("supplies and demands must balance")

    edges = [(i, j) for i in range(n) for j in range(m)]
    best = np.inf
    for subset in itertools.combinations(edges, n + m - 1):
        # Leaf elimination solves the tree flow and detects cycles at once.
        degree = np.zeros(n + m, dtype=int)
        incident: list[list[int]] = [[] for _ in range(n + m)]
        for idx, (i, j) in enumerate(subset):
            degree[i] += 1
            degree[n + j] += 1
            incident[i].append(idx)
            incident[n + j].append(idx)
        remaining = np.concatenate([a, b])
        used = [False] * (n + m - 1)
        flows = np.zeros(n + m - 1)
        stack = [u for u in range(n + m) if degree[u] == 1]
        solved = 0
        while stack:
            u = stack.pop()
            edge_idx = next((e for e in incident[u] if not used[e]), None)
            if edge_idx is None:
                continue
            i, j = subset[edge_idx]
            other = n + j if u == i else i
            flows[edge_idx] = remaining[u]
            remaining[u] = 0.0
            remaining[other] -= flows[edge_idx]
            used[edge_idx] = True
            solved += 1
            degree[u] -= 1
            degree[other] -= 1
            if degree[other] == 1:
                stack.append(other)
        if solved < n + m - 1:
            continue  # subset contains a cycle, not a tree
        if flows.min() < -1e-12:
            continue
        value = float(sum(f * cost[i, j] for f, (i, j) in zip(flows, subset)))
        best = min(best, value)
    return best
