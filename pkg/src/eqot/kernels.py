"""Numerically stable evaluation of the smoothed dual objective.

The dual objective of the entropy-regularized problem is

    F(f, g, lam) = <f, a> + <g, b> - eta * log(sum_k ||zeta^k||_1) - eta,

with zeta^k = exp(L^k) and log-potentials L^k_ij = (f_i + g_j - lam_k
C^k_ij) / eta.  With the schedule's eta the exponents routinely exceed the
double-precision range, so every quantity here is computed from L through a
single log-sum-exp pass with a global max shift and only exponentiated after
normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DualState, EotProblem, NonFinite, PlanTensor


def _require_finite_state(f: np.ndarray, g: np.ndarray, lam: np.ndarray) -> None:
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))
            and np.all(np.isfinite(lam))):
        raise NonFinite("dual variables contain NaN or infinite entries")


def log_potentials(f: np.ndarray, g: np.ndarray, lam: np.ndarray,
                   costs: np.ndarray, eta: float) -> np.ndarray:
    """The (N, n, n) tensor L^k_ij = (f_i + g_j - lam_k * C^k_ij) / eta."""
    return (f[None, :, None] + g[None, None, :] - lam[:, None, None] * costs) / eta


def row_logsumexp(f, g, lam, problem: EotProblem, eta: float) -> np.ndarray:
    """Per-row log-sum-exp of the log-potentials, reduced over agents and columns."""
    length = log_potentials(f, g, lam, problem.costs, eta)
    m = length.max(axis=(0, 2))
    return m + np.log(np.exp(length - m[None, :, None]).sum(axis=(0, 2)))


def col_logsumexp(f, g, lam, problem: EotProblem, eta: float) -> np.ndarray:
    """Per-column log-sum-exp of the log-potentials, reduced over agents and rows."""
    length = log_potentials(f, g, lam, problem.costs, eta)
    m = length.max(axis=(0, 1))
    return m + np.log(np.exp(length - m[None, None, :]).sum(axis=(0, 1)))


@dataclass(frozen=True)
class PotentialEval:
    """Everything derivable from one normalized plan evaluation.

    The three partial gradients of F share all expensive terms, so solvers
    compute this once per iterate instead of calling the per-gradient
    functions separately.
    """

    log_mass: float            # log sum_k ||zeta^k||_1
    objective: float           # F(f, g, lam)
    plan: np.ndarray           # (N, n, n), entries sum to 1
    row_marginal: np.ndarray   # r(sum_k pi^k)
    col_marginal: np.ndarray   # c(sum_k pi^k)
    agent_costs: np.ndarray    # <pi^k, C^k> for each agent


def evaluate(f, g, lam, problem: EotProblem, eta: float,
             with_plan: bool = True) -> PotentialEval:
    """Evaluate mass, objective and (optionally) plan plus marginals at (f, g, lam).

    ``lam`` is not required to lie on the simplex: the accelerated solver and
    finite-difference checks evaluate at unconstrained points.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    lam = np.asarray(lam, dtype=float)
    _require_finite_state(f, g, lam)
    length = log_potentials(f, g, lam, problem.costs, eta)
    m = float(length.max())
    z = np.exp(length - m)
    log_mass_val = m + float(np.log(z.sum()))
    objective = (float(f @ problem.a) + float(g @ problem.b)
                 - eta * log_mass_val - eta)
    if not with_plan:
        return PotentialEval(log_mass_val, objective, None, None, None, None)
    plan = np.exp(length - log_mass_val)
    total = plan.sum(axis=0)
    agent_costs = (plan * problem.costs).sum(axis=(1, 2))
    return PotentialEval(
        log_mass=log_mass_val, objective=objective, plan=plan,
        row_marginal=total.sum(axis=1), col_marginal=total.sum(axis=0),
        agent_costs=agent_costs,
    )


def log_mass(state: DualState, problem: EotProblem, eta: float) -> float:
    """log sum over agents and cells of exp(L^k_ij); safe for |L| up to 1e6."""
    return evaluate(state.f, state.g, state.lam, problem, eta,
                    with_plan=False).log_mass


def dual_objective(state: DualState, problem: EotProblem, eta: float) -> float:
    """F(f, g, lam) = <f, a> + <g, b> - eta * log_mass - eta."""
    return evaluate(state.f, state.g, state.lam, problem, eta,
                    with_plan=False).objective


def plan_from_duals(state: DualState, problem: EotProblem, eta: float) -> PlanTensor:
    """The normalized plans pi^k = zeta^k / sum_k ||zeta^k||_1.

    Entries always sum to one; the tensor is exponentiated only after the
    log-domain normalization.
    """
    ev = evaluate(state.f, state.g, state.lam, problem, eta)
    return PlanTensor(pi=ev.plan)


def grad_f(state: DualState, problem: EotProblem, eta: float) -> np.ndarray:
    """Partial gradient of F in f: a - r(sum_k pi^k)."""
    ev = evaluate(state.f, state.g, state.lam, problem, eta)
    return problem.a - ev.row_marginal


def grad_g(state: DualState, problem: EotProblem, eta: float) -> np.ndarray:
    """Partial gradient of F in g: b - c(sum_k pi^k)."""
    ev = evaluate(state.f, state.g, state.lam, problem, eta)
    return problem.b - ev.col_marginal


def grad_lambda(state: DualState, problem: EotProblem, eta: float) -> np.ndarray:
    """Partial gradient of F in lam: the per-agent costs <pi^k, C^k>."""
    ev = evaluate(state.f, state.g, state.lam, problem, eta)
    return ev.agent_costs


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1}.

    Sort-and-threshold rule; idempotent and nonexpansive.  Ties at the
    threshold need no special handling because the projection is unique.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFinite("cannot project a non-finite vector")
    if v.ndim != 1 or v.size < 1:
        raise NonFinite("expected a nonempty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0.0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def marginal_residual(plan, problem: EotProblem) -> tuple[float, float]:
    """L1 deviations (||r(sum pi^k) - a||_1, ||c(sum pi^k) - b||_1)."""
    pi = plan.pi if isinstance(plan, PlanTensor) else np.asarray(plan, dtype=float)
    total = pi.sum(axis=0)
    row = float(np.abs(total.sum(axis=1) - problem.a).sum())
    col = float(np.abs(total.sum(axis=0) - problem.b).sum())
    return row, col
