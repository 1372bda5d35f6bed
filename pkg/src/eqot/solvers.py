"""The three dual ascent loops and their primal output pipeline.

All solvers maximize the same smoothed dual objective F over (f, g, lam) and
finish identically: the plan taken right after the final f-update (which is
row-feasible by construction) is split into per-agent margins and rounded
onto them, yielding a feasible plan tensor and the pre-update lam as the
reported weights.

* :func:`solve_pam`  - exact maximization in f and g, one projected gradient
  step in lam per iteration.
* :func:`solve_pame` - same f/g steps plus a simplex-projected extrapolation
  (momentum) point for the lam step.
* :func:`solve_apga` - Nesterov-style accelerated projected gradient on all
  three blocks simultaneously, with gradient steps of length 1/L.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import (
    DualState,
    EotError,
    EotProblem,
    NonFinite,
    PlanTensor,
    SolverConfig,
)
from .kernels import (
    col_logsumexp,
    evaluate,
    project_simplex,
    row_logsumexp,
)
from .rounding import recover_primal

ZERO_ROW_SENTINEL = -1e12  # f_i / eta for rows with a_i = 0; exp underflows to 0


@dataclass(frozen=True)
class IterationRecord:
    """One row of a solve trace.

    ``col_residual`` is ||c^t - b||_1 measured after the f-update (for APGA,
    at the end-of-iteration state).  ``agent_costs`` and ``objective`` are
    evaluated at the end-of-iteration state.  ``lambda_y_gap`` and
    ``hamiltonian`` are only populated by PAME.
    """

    iteration: int
    time_ms: float
    objective: float
    col_residual: float
    lambda_step: float
    agent_costs: np.ndarray
    primal: float
    lambda_y_gap: float | None = None
    hamiltonian: float | None = None


@dataclass(frozen=True)
class SolveResult:
    """Final dual state, rounded feasible plans, weights and trace."""

    state: DualState
    plan: PlanTensor
    lam_hat: np.ndarray
    trace: tuple[IterationRecord, ...]
    reason: str                # "converged" | "stagnated" | "max_iters"
    iterations: int


def initial_state(problem: EotProblem) -> DualState:
    """All-ones potentials and uniform agent weights."""
    n, big_n = problem.n, problem.n_agents
    lam = np.full(big_n, 1.0 / big_n)
    return DualState(f=np.ones(n), g=np.ones(n), lam=lam, lam_prev=lam.copy())


def zero_cost_plan(problem: EotProblem) -> PlanTensor:
    """A feasible plan for the degenerate all-zero-cost case (any plan is optimal)."""
    pi = np.repeat(np.outer(problem.a, problem.b)[None, :, :],
                   problem.n_agents, axis=0) / problem.n_agents
    return PlanTensor(pi=pi, feasible=True)


def _f_update(f, g, lam, problem: EotProblem, eta: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_a = np.log(problem.a)
    out = f + eta * (log_a - row_logsumexp(f, g, lam, problem, eta))
    # Zero-weight rows would send f_i to -inf; a finite sentinel keeps the
    # arithmetic clean while the row mass underflows to exactly zero.
    return np.where(problem.a > 0.0, out, ZERO_ROW_SENTINEL * eta)


def _g_update(f, g, lam, problem: EotProblem, eta: float) -> np.ndarray:
    return g + eta * (np.log(problem.b) - col_logsumexp(f, g, lam, problem, eta))


def pam_f_update(state: DualState, problem: EotProblem, eta: float) -> np.ndarray:
    """Exact maximization of F in f; afterwards the plan's row marginal is a."""
    return _f_update(state.f, state.g, state.lam, problem, eta)


def pam_g_update(state: DualState, problem: EotProblem, eta: float) -> np.ndarray:
    """Exact maximization of F in g; afterwards the plan's column marginal is b.

    The objective increase of this step equals eta * KL(b || c^t) where c^t
    is the pre-update column marginal.
    """
    return _g_update(state.f, state.g, state.lam, problem, eta)


def pam_lambda_update(state: DualState, problem: EotProblem, eta: float,
                      tau: float) -> np.ndarray:
    """One projected gradient step on the agent weights."""
    ev = evaluate(state.f, state.g, state.lam, problem, eta)
    return project_simplex(state.lam + tau * ev.agent_costs)


def pame_y_update(lam: np.ndarray, lam_prev: np.ndarray,
                  theta: float) -> np.ndarray:
    """Projected extrapolation point y = Proj(lam + (1 - theta)(lam - lam_prev))."""
    return project_simplex(lam + (1.0 - theta) * (lam - lam_prev))


def pame_lambda_update(state: DualState, problem: EotProblem, eta: float,
                       tau: float) -> np.ndarray:
    """Projected gradient step taken from the extrapolation point ``state.y``."""
    if state.y is None:
        raise EotError("pame_lambda_update requires a state with y set")
    ev = evaluate(state.f, state.g, state.y, problem, eta)
    return project_simplex(state.y + tau * ev.agent_costs)


def hamiltonian(f, g, lam, lam_prev, problem: EotProblem, eta: float,
                tau: float) -> float:
    """F(f, g, lam) minus the momentum penalty ||lam - lam_prev||^2 / (2 tau)."""
    ev = evaluate(f, g, lam, problem, eta, with_plan=False)
    diff = np.asarray(lam) - np.asarray(lam_prev)
    return ev.objective - float(diff @ diff) / (2.0 * tau)


def _check_objective(value: float, iteration: int) -> None:
    if not np.isfinite(value):
        raise NonFinite(f"objective became non-finite at iteration {iteration}")


def _finish(problem, config, f, g, lam, lam_prev, y, round_f, round_g,
            round_lam, trace, reason, iterations) -> SolveResult:
    round_ev = evaluate(round_f, round_g, round_lam, problem, config.eta)
    plan = recover_primal(round_ev.plan, problem)
    if not plan.feasible:
        raise EotError("rounded plan failed the coupling feasibility check")
    state = DualState(f=f, g=g, lam=lam, lam_prev=lam_prev, y=y)
    return SolveResult(state=state, plan=plan, lam_hat=round_lam.copy(),
                       trace=tuple(trace), reason=reason, iterations=iterations)


def solve_pam(problem: EotProblem, config: SolverConfig) -> SolveResult:
    """Run projected alternating maximization until the residual thresholds hold.

    Per iteration: exact f-update, exact g-update, projected gradient step on
    lam with step ``config.tau``.  Stops once the column residual measured
    after the f-update and the lam step length both fall below their
    thresholds (``None`` disables a check), on objective stagnation, or at
    ``max_iters``.  The rounded output uses the plan after the final
    f-update, before that iteration's g- and lam-updates.

    Returns
    -------
    SolveResult
        With ``plan`` feasible and ``lam_hat`` equal to the weights in force
        when the output plan was formed.
    """
    eta, tau = config.eta, config.tau
    st = initial_state(problem)
    f, g, lam = st.f.copy(), st.g.copy(), st.lam.copy()
    lam_prev = lam.copy()
    trace: list[IterationRecord] = []
    elapsed = 0.0
    prev_objective = None
    reason = "max_iters"
    iterations = config.max_iters
    round_f = round_g = round_lam = None

    for t in range(config.max_iters):
        tic = time.perf_counter()
        f_new = _f_update(f, g, lam, problem, eta)

        col_lse = col_logsumexp(f_new, g, lam, problem, eta)
        m = col_lse.max()
        log_mass_mid = m + np.log(np.exp(col_lse - m).sum())
        c_t = np.exp(col_lse - log_mass_mid)
        col_res = float(np.abs(c_t - problem.b).sum())
        g_new = g + eta * (np.log(problem.b) - col_lse)

        ev = evaluate(f_new, g_new, lam, problem, eta)
        lam_new = project_simplex(lam + tau * ev.agent_costs)
        elapsed += time.perf_counter() - tic

        round_f, round_g, round_lam = f_new, g, lam
        lam_step = float(np.linalg.norm(lam_new - lam))
        end = evaluate(f_new, g_new, lam_new, problem, eta, with_plan=False)
        _check_objective(end.objective, t + 1)

        stagnated = (prev_objective is not None
                     and abs(end.objective - prev_objective) < config.stagnation_tol)
        converged = (config.col_residual_tol is not None
                     and config.lambda_step_tol is not None
                     and col_res <= config.col_residual_tol
                     and lam_step <= config.lambda_step_tol)
        last = converged or stagnated or t == config.max_iters - 1

        if (t + 1) % config.record_every == 0 or t == 0 or last:
            rec_ev = evaluate(f_new, g_new, lam_new, problem, eta)
            trace.append(IterationRecord(
                iteration=t + 1, time_ms=elapsed * 1e3,
                objective=rec_ev.objective, col_residual=col_res,
                lambda_step=lam_step, agent_costs=rec_ev.agent_costs,
                primal=float(lam_new @ rec_ev.agent_costs),
            ))

        f, g, lam_prev, lam = f_new, g_new, lam, lam_new
        prev_objective = end.objective
        if converged or stagnated:
            reason = "converged" if converged else "stagnated"
            iterations = t + 1
            break

    return _finish(problem, config, f, g, lam, lam_prev, None,
                   round_f, round_g, round_lam, trace, reason, iterations)


def solve_pame(problem: EotProblem, config: SolverConfig) -> SolveResult:
    """Projected alternating maximization with extrapolated lam steps.

    Identical to :func:`solve_pam` except the lam step starts from the
    momentum point y = Proj(lam + (1 - theta)(lam - lam_prev)) and the
    stopping test additionally requires ||lam - y|| below its threshold
    (with the lam step compared one iteration back).
    """
    eta, tau, theta = config.eta, config.tau, config.theta
    st = initial_state(problem)
    f, g, lam = st.f.copy(), st.g.copy(), st.lam.copy()
    lam_prev = lam.copy()          # lam^{-1} = lam^0
    prev_lam_step = 0.0
    y = lam.copy()
    trace: list[IterationRecord] = []
    elapsed = 0.0
    prev_objective = None
    reason = "max_iters"
    iterations = config.max_iters
    round_f = round_g = round_lam = None

    for t in range(config.max_iters):
        tic = time.perf_counter()
        f_new = _f_update(f, g, lam, problem, eta)

        col_lse = col_logsumexp(f_new, g, lam, problem, eta)
        m = col_lse.max()
        log_mass_mid = m + np.log(np.exp(col_lse - m).sum())
        c_t = np.exp(col_lse - log_mass_mid)
        col_res = float(np.abs(c_t - problem.b).sum())
        g_new = g + eta * (np.log(problem.b) - col_lse)

        y_new = pame_y_update(lam, lam_prev, theta)
        ev = evaluate(f_new, g_new, y_new, problem, eta)
        lam_new = project_simplex(y_new + tau * ev.agent_costs)
        elapsed += time.perf_counter() - tic

        round_f, round_g, round_lam = f_new, g, lam
        lam_step = float(np.linalg.norm(lam_new - lam))
        y_gap = float(np.linalg.norm(lam_new - y_new))
        end = evaluate(f_new, g_new, lam_new, problem, eta, with_plan=False)
        _check_objective(end.objective, t + 1)

        stagnated = (prev_objective is not None
                     and abs(end.objective - prev_objective) < config.stagnation_tol)
        converged = (config.col_residual_tol is not None
                     and config.lambda_step_tol is not None
                     and config.lambda_y_tol is not None
                     and col_res <= config.col_residual_tol
                     and prev_lam_step <= config.lambda_step_tol
                     and y_gap <= config.lambda_y_tol)
        last = converged or stagnated or t == config.max_iters - 1

        if (t + 1) % config.record_every == 0 or t == 0 or last:
            rec_ev = evaluate(f_new, g_new, lam_new, problem, eta)
            energy = rec_ev.objective - lam_step ** 2 / (2.0 * tau)
            trace.append(IterationRecord(
                iteration=t + 1, time_ms=elapsed * 1e3,
                objective=rec_ev.objective, col_residual=col_res,
                lambda_step=lam_step, agent_costs=rec_ev.agent_costs,
                primal=float(lam_new @ rec_ev.agent_costs),
                lambda_y_gap=y_gap, hamiltonian=energy,
            ))

        f, g = f_new, g_new
        lam_prev, lam, y = lam, lam_new, y_new
        prev_lam_step = lam_step
        prev_objective = end.objective
        if converged or stagnated:
            reason = "converged" if converged else "stagnated"
            iterations = t + 1
            break

    return _finish(problem, config, f, g, lam, lam_prev, y,
                   round_f, round_g, round_lam, trace, reason, iterations)


def apga_momentum_weight(t: int) -> float:
    """Momentum weight (t - 2) / (t + 1), clamped to zero for t <= 2."""
    return max(0.0, (t - 2.0) / (t + 1.0))


def solve_apga(problem: EotProblem, config: SolverConfig) -> SolveResult:
    """Accelerated projected gradient ascent on all three blocks.

    Extrapolates (f, g, lam) with weight (t - 2)/(t + 1), then takes gradient
    steps of length 1/L from the extrapolated point, projecting lam back onto
    the simplex.  L defaults to 3 c_inf**2 / eta unless
    ``config.apga_lipschitz`` overrides it.  Because the iterates are not
    row-feasible, one exact f-update is applied to the final state before the
    shared margins-plus-rounding output pipeline.
    """
    eta = config.eta
    lips = config.apga_lipschitz
    if lips is None:
        if problem.c_inf == 0.0:
            raise EotError("no default Lipschitz estimate for zero costs; "
                           "set apga_lipschitz or use zero_cost_plan")
        lips = 3.0 * problem.c_inf ** 2 / eta
    step = 1.0 / lips

    st = initial_state(problem)
    f, g, lam = st.f.copy(), st.g.copy(), st.lam.copy()
    f_prev, g_prev, lam_prev = f.copy(), g.copy(), lam.copy()
    trace: list[IterationRecord] = []
    elapsed = 0.0
    prev_objective = None
    reason = "max_iters"
    iterations = config.max_iters

    for t in range(1, config.max_iters + 1):
        tic = time.perf_counter()
        w = apga_momentum_weight(t)
        v_f = f + w * (f - f_prev)
        v_g = g + w * (g - g_prev)
        z = lam + w * (lam - lam_prev)

        ev = evaluate(v_f, v_g, z, problem, eta)
        f_next = v_f + step * (problem.a - ev.row_marginal)
        g_next = v_g + step * (problem.b - ev.col_marginal)
        lam_next = project_simplex(z + step * ev.agent_costs)
        elapsed += time.perf_counter() - tic

        lam_step = float(np.linalg.norm(lam_next - lam))
        f_prev, g_prev, lam_prev = f, g, lam
        f, g, lam = f_next, g_next, lam_next

        end = evaluate(f, g, lam, problem, eta)
        _check_objective(end.objective, t)
        col_res = float(np.abs(end.col_marginal - problem.b).sum())

        stagnated = (prev_objective is not None
                     and abs(end.objective - prev_objective) < config.stagnation_tol)
        converged = (config.col_residual_tol is not None
                     and config.lambda_step_tol is not None
                     and col_res <= config.col_residual_tol
                     and lam_step <= config.lambda_step_tol)
        last = converged or stagnated or t == config.max_iters

        if t % config.record_every == 0 or t == 1 or last:
            trace.append(IterationRecord(
                iteration=t, time_ms=elapsed * 1e3,
                objective=end.objective, col_residual=col_res,
                lambda_step=lam_step, agent_costs=end.agent_costs,
                primal=float(lam @ end.agent_costs),
            ))

        prev_objective = end.objective
        if converged or stagnated:
            reason = "converged" if converged else "stagnated"
            iterations = t
            break

    # Gradient iterates never match the row marginal exactly; one closed-form
    # f-maximization restores row feasibility before margins and rounding.
    round_f = _f_update(f, g, lam, problem, eta)
    return _finish(problem, config, f, g, lam, lam_prev, None,
                   round_f, g, lam, trace, reason, iterations)
