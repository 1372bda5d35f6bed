import dataclasses
import math

import numpy as np
import pytest

from eqot import (
    DualState,
    SolverConfig,
    default_schedule,
    dual_objective,
    marginal_residual,
    plan_from_duals,
    validate_problem,
    zero_cost_plan,
)
from eqot.kernels import evaluate, project_simplex
from eqot.solvers import (
    apga_momentum_weight,
    hamiltonian,
    initial_state,
    pam_f_update,
    pam_g_update,
    pam_lambda_update,
    pame_lambda_update,
    pame_y_update,
    solve_apga,
    solve_pam,
    solve_pame,
)

from helpers import random_problem, random_state


def _diagonal_toy():
    return validate_problem([0.5, 0.5], [0.5, 0.5], [[[0.0, 1.0], [1.0, 0.0]]])


def _uniform_zero_cost(n=3, n_agents=2):
    marginal = np.full(n, 1.0 / n)
    return validate_problem(marginal, marginal, np.zeros((n_agents, n, n)))


def _manual_config(problem, epsilon=0.05, **overrides):
    cfg = default_schedule(problem, epsilon)
    return dataclasses.replace(cfg, **overrides)


def test_f_update_uniform_hand_value():
    n = 4
    p = _uniform_zero_cost(n=n, n_agents=1)
    s = DualState(f=np.zeros(n), g=np.zeros(n), lam=np.array([1.0]))
    f_new = pam_f_update(s, p, eta=1.0)
    np.testing.assert_allclose(f_new, -2.0 * math.log(n), atol=1e-14)
    after = DualState(f=f_new, g=s.g, lam=s.lam)
    ev = evaluate(after.f, after.g, after.lam, p, 1.0)
    assert math.exp(ev.log_mass) == pytest.approx(1.0, abs=1e-12)


def test_f_update_mass_one_and_row_marginal():
    for seed in range(6):
        p = random_problem(n=7, n_agents=3, seed=seed)
        s = random_state(p, seed=seed)
        f_new = pam_f_update(s, p, eta=0.3)
        ev = evaluate(f_new, s.g, s.lam, p, 0.3)
        assert abs(math.exp(ev.log_mass) - 1.0) <= 1e-10
        assert np.abs(ev.row_marginal - p.a).sum() <= 1e-10


def test_f_update_zero_weight_row_carries_no_mass():
    p = validate_problem([1.0, 0.0], [0.5, 0.5], [np.eye(2)])
    s = DualState(f=np.zeros(2), g=np.zeros(2), lam=np.array([1.0]))
    f_new = pam_f_update(s, p, eta=0.5)
    assert np.isfinite(f_new).all()
    plan = plan_from_duals(DualState(f=f_new, g=s.g, lam=s.lam), p, 0.5)
    assert plan.pi[0, 1, :].max() <= 1e-300


def test_g_update_fixed_point_on_symmetric_instance():
    p = _uniform_zero_cost(n=4, n_agents=2)
    s = initial_state(p)
    f_new = pam_f_update(s, p, eta=1.0)
    mid = DualState(f=f_new, g=s.g, lam=s.lam)
    g_new = pam_g_update(mid, p, eta=1.0)
    np.testing.assert_allclose(g_new, s.g, atol=1e-12)


def test_g_update_increase_equals_scaled_kl():
    # Independent evaluation of both sides of the exact increase identity.
    eta = 0.6
    for seed in range(6):
        p = random_problem(n=6, n_agents=2, seed=seed)
        s = random_state(p, seed=seed + 3)
        ev = evaluate(s.f, s.g, s.lam, p, eta)
        c_t = ev.col_marginal
        kl = float(np.sum(p.b * (np.log(p.b) - np.log(c_t))))
        g_new = pam_g_update(s, p, eta)
        after = DualState(f=s.f, g=g_new, lam=s.lam)
        increase = dual_objective(after, p, eta) - ev.objective
        assert increase == pytest.approx(eta * kl, abs=1e-9)
        # Pinsker-type lower bound on the same increase.
        assert increase >= eta / 2.0 * np.abs(c_t - p.b).sum() ** 2 - 1e-9
        ev_after = evaluate(s.f, g_new, s.lam, p, eta)
        assert np.abs(ev_after.col_marginal - p.b).sum() <= 1e-10
        assert abs(math.exp(ev_after.log_mass) - 1.0) <= 1e-10


def test_lambda_update_constant_gradient_is_fixed_point():
    # A gradient that is constant across agents shifts along the all-ones
    # direction, which the simplex projection removes.  Identical costs with
    # uniform weights give identical per-agent masses, hence a constant
    # gradient.
    p = validate_problem([0.5, 0.5], [0.5, 0.5],
                         np.ones((3, 2, 2)) * 2.0)
    s = DualState(f=np.zeros(2), g=np.zeros(2), lam=np.full(3, 1.0 / 3.0))
    grads = evaluate(s.f, s.g, s.lam, p, 1.0).agent_costs
    assert np.ptp(grads) <= 1e-15
    lam_new = pam_lambda_update(s, p, eta=1.0, tau=0.7)
    np.testing.assert_allclose(lam_new, s.lam, atol=1e-12)
    # Translation invariance of the projection along the all-ones direction.
    lam = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_simplex(lam + 0.37), lam, atol=1e-12)


def test_lambda_update_singleton_simplex():
    p = _diagonal_toy()
    s = DualState(f=np.zeros(2), g=np.zeros(2), lam=np.array([1.0]))
    np.testing.assert_allclose(pam_lambda_update(s, p, 1.0, 0.5), [1.0])


def test_lambda_update_sufficient_increase():
    for seed in range(6):
        p = random_problem(n=5, n_agents=3, seed=seed, cost_high=2.0)
        s = random_state(p, seed=seed)
        eta = 0.4
        tau = eta / p.c_inf ** 2
        f_new = pam_f_update(s, p, eta)
        mid = DualState(f=f_new, g=s.g, lam=s.lam)
        g_new = pam_g_update(mid, p, eta)
        state = DualState(f=f_new, g=g_new, lam=s.lam)
        lam_new = pam_lambda_update(state, p, eta, tau)
        before = dual_objective(state, p, eta)
        after = dual_objective(DualState(f=f_new, g=g_new, lam=lam_new), p, eta)
        step = np.linalg.norm(lam_new - s.lam)
        assert after - before >= p.c_inf ** 2 * step ** 2 / (2 * eta) - 1e-9


def test_solve_pam_diagonal_toy():
    p = _diagonal_toy()
    cfg = _manual_config(p, epsilon=0.05, eta=0.01, tau=0.01)
    res = solve_pam(p, cfg)
    assert res.plan.feasible
    np.testing.assert_allclose(res.plan.pi[0], [[0.5, 0.0], [0.0, 0.5]],
                               atol=0.05)
    cost = float((res.plan.pi[0] * p.costs[0]).sum())
    assert cost == pytest.approx(0.0, abs=0.05)


def test_solve_pam_zero_costs():
    p = _uniform_zero_cost()
    cfg = SolverConfig(epsilon=0.05, eta=0.1, tau=1.0, max_iters=50,
                       col_residual_tol=1e-3, lambda_step_tol=1e-3)
    res = solve_pam(p, cfg)
    assert res.reason == "converged"
    assert res.iterations == 1
    assert res.plan.feasible
    assert float((res.plan.pi * p.costs).sum()) == 0.0


def test_zero_cost_plan_helper():
    p = _uniform_zero_cost(n=4, n_agents=3)
    plan = zero_cost_plan(p)
    assert plan.feasible
    row, col = marginal_residual(plan, p)
    assert row <= 1e-12 and col <= 1e-12


def test_solve_pam_monotone_objective():
    p = random_problem(n=8, n_agents=3, seed=11)
    cfg = _manual_config(p, epsilon=0.2, max_iters=400, stagnation_tol=0.0,
                         col_residual_tol=None, lambda_step_tol=None)
    res = solve_pam(p, cfg)
    values = [rec.objective for rec in res.trace]
    diffs = np.diff(values)
    assert diffs.min() >= -1e-9


def test_solve_pam_output_state_indexing():
    # The rounded output must come from the plan after the final f-update,
    # before that iteration's g- and weight-updates, with the pre-update
    # weights reported.
    p = random_problem(n=5, n_agents=2, seed=2)
    eta = 0.3
    tau = eta / p.c_inf ** 2
    cfg = SolverConfig(epsilon=0.05, eta=eta, tau=tau, max_iters=3,
                       stagnation_tol=0.0)
    res = solve_pam(p, cfg)
    assert res.reason == "max_iters"

    st = initial_state(p)
    f, g, lam = st.f.copy(), st.g.copy(), st.lam.copy()
    for _ in range(3):
        f_prev_g, lam_prev_iter = g.copy(), lam.copy()
        f = pam_f_update(DualState(f=f, g=g, lam=lam), p, eta)
        g_mid = DualState(f=f, g=g, lam=lam)
        g = pam_g_update(g_mid, p, eta)
        lam = pam_lambda_update(DualState(f=f, g=g, lam=lam), p, eta, tau)
    np.testing.assert_allclose(res.lam_hat, lam_prev_iter, atol=1e-15)
    np.testing.assert_allclose(res.state.lam, lam, atol=1e-15)
    np.testing.assert_allclose(res.state.f, f, atol=1e-15)


def test_solve_pam_trace_semantics():
    p = random_problem(n=4, n_agents=2, seed=5)
    cfg = _manual_config(p, epsilon=0.1, max_iters=10, stagnation_tol=0.0,
                         col_residual_tol=None, lambda_step_tol=None)
    res = solve_pam(p, cfg)
    assert len(res.trace) == 10
    assert [rec.iteration for rec in res.trace] == list(range(1, 11))
    for rec in res.trace:
        assert np.isfinite(rec.objective)
        assert rec.col_residual >= 0.0
        assert rec.lambda_step >= 0.0
        assert rec.time_ms >= 0.0
        assert rec.agent_costs.shape == (2,)


def test_pame_y_update_zero_momentum():
    lam = np.array([0.3, 0.7])
    np.testing.assert_allclose(pame_y_update(lam, lam, theta=0.1), lam,
                               atol=1e-15)


def test_pame_y_update_theta_one_limit():
    # As theta -> 1 the extrapolation vanishes and the weight step reduces to
    # plain projected gradient with the (halved) PAME step.
    p = random_problem(n=4, n_agents=3, seed=8)
    s = random_state(p, seed=8)
    eta = 0.5
    tau = eta / (2.0 * p.c_inf ** 2)
    y = pame_y_update(s.lam, s.lam_prev, theta=1.0 - 1e-12)
    np.testing.assert_allclose(y, s.lam, atol=1e-9)
    full = DualState(f=s.f, g=s.g, lam=s.lam, lam_prev=s.lam_prev, y=s.lam)
    lam_pame = pame_lambda_update(full, p, eta, tau)
    lam_plain = pam_lambda_update(s, p, eta, tau)
    np.testing.assert_allclose(lam_pame, lam_plain, atol=1e-12)


def test_pame_y_update_nonexpansive_bound():
    rng = np.random.default_rng(3)
    theta = 0.25
    for _ in range(20):
        lam = rng.dirichlet(np.ones(4))
        lam_prev = rng.dirichlet(np.ones(4))
        y = pame_y_update(lam, lam_prev, theta)
        assert (np.linalg.norm(y - lam)
                <= (1 - theta) * np.linalg.norm(lam - lam_prev) + 1e-12)


def test_pame_hamiltonian_sufficient_increase():
    theta = 0.1
    for seed in range(5):
        p = random_problem(n=5, n_agents=3, seed=seed, cost_high=2.0)
        eta = 0.4
        tau = eta / (2.0 * p.c_inf ** 2)
        s = random_state(p, seed=seed + 20)
        f_new = pam_f_update(s, p, eta)
        g_new = pam_g_update(DualState(f=f_new, g=s.g, lam=s.lam), p, eta)
        y_new = pame_y_update(s.lam, s.lam_prev, theta)
        state = DualState(f=f_new, g=g_new, lam=s.lam, lam_prev=s.lam_prev,
                          y=y_new)
        lam_new = pame_lambda_update(state, p, eta, tau)
        e_before = hamiltonian(f_new, g_new, s.lam, s.lam_prev, p, eta, tau)
        e_after = hamiltonian(f_new, g_new, lam_new, s.lam, p, eta, tau)
        rhs = ((2 * theta - theta ** 2) / (2 * tau)
               * np.linalg.norm(s.lam - s.lam_prev) ** 2
               + np.linalg.norm(lam_new - y_new) ** 2 / (4 * tau))
        assert e_after - e_before >= rhs - 1e-9


def test_solve_pame_diagonal_toy():
    p = _diagonal_toy()
    cfg = dataclasses.replace(default_schedule(p, 0.05, algorithm="pame"),
                              eta=0.01, tau=0.005)
    res = solve_pame(p, cfg)
    assert res.plan.feasible
    np.testing.assert_allclose(res.plan.pi[0], [[0.5, 0.0], [0.0, 0.5]],
                               atol=0.05)


def test_solve_pame_zero_costs():
    p = _uniform_zero_cost()
    cfg = SolverConfig(epsilon=0.05, eta=0.1, tau=1.0, theta=0.1, max_iters=50,
                       col_residual_tol=1e-3, lambda_step_tol=1e-3,
                       lambda_y_tol=1e-3)
    res = solve_pame(p, cfg)
    assert res.reason == "converged"
    assert res.plan.feasible


def test_solve_pame_matches_pam_value():
    p = random_problem(n=6, n_agents=3, seed=13)
    pam = solve_pam(p, default_schedule(p, 0.05))
    pame = solve_pame(p, default_schedule(p, 0.05, algorithm="pame"))
    v1 = max(float((pam.plan.pi[k] * p.costs[k]).sum()) for k in range(3))
    v2 = max(float((pame.plan.pi[k] * p.costs[k]).sum()) for k in range(3))
    assert v1 == pytest.approx(v2, abs=0.05)


def test_apga_momentum_weight_clamped():
    assert apga_momentum_weight(1) == 0.0
    assert apga_momentum_weight(2) == 0.0
    assert apga_momentum_weight(3) == pytest.approx(0.25)
    assert apga_momentum_weight(6) == pytest.approx(4.0 / 7.0)


def test_solve_apga_first_iteration_is_plain_gradient_step():
    p = random_problem(n=4, n_agents=2, seed=17)
    eta = 0.5
    lips = 3.0 * p.c_inf ** 2 / eta
    cfg = SolverConfig(epsilon=0.05, eta=eta, tau=eta / p.c_inf ** 2,
                       max_iters=1, stagnation_tol=0.0)
    res = solve_apga(p, cfg)
    st = initial_state(p)
    ev = evaluate(st.f, st.g, st.lam, p, eta)
    np.testing.assert_allclose(res.state.f,
                               st.f + (p.a - ev.row_marginal) / lips,
                               atol=1e-12)
    np.testing.assert_allclose(
        res.state.lam, project_simplex(st.lam + ev.agent_costs / lips),
        atol=1e-12)


def test_solve_apga_zero_costs_fixed_point():
    p = _uniform_zero_cost(n=3, n_agents=2)
    cfg = SolverConfig(epsilon=0.05, eta=0.5, tau=1.0, max_iters=50,
                       apga_lipschitz=1.0)
    res = solve_apga(p, cfg)
    # Uniform marginals already match, so the potentials never move.
    np.testing.assert_allclose(res.state.f, np.ones(3), atol=1e-12)
    np.testing.assert_allclose(res.state.g, np.ones(3), atol=1e-12)
    assert res.reason == "stagnated"
    assert res.plan.feasible


def test_solve_apga_matches_pam_on_toy_but_slower():
    # Asymmetric marginals so the all-ones start is not already optimal.
    p = validate_problem([0.3, 0.7], [0.6, 0.4], [[[0.0, 1.0], [1.0, 0.0]]])
    cfg_pam = default_schedule(p, 0.05, max_iters=200000)
    pam = solve_pam(p, cfg_pam)
    apga = solve_apga(p, cfg_pam)
    v_pam = max_cost(pam, p)
    v_apga = max_cost(apga, p)
    assert v_apga == pytest.approx(v_pam, abs=0.05)
    assert apga.iterations > pam.iterations
    assert apga.plan.feasible


def max_cost(result, problem):
    return max(float((result.plan.pi[k] * problem.costs[k]).sum())
               for k in range(problem.n_agents))


def test_solver_rejects_insufficient_config():
    p = _uniform_zero_cost()
    cfg = SolverConfig(epsilon=0.05, eta=0.1, tau=1.0, max_iters=5)
    res = solve_pam(p, cfg)  # thresholds disabled: runs stagnation/max_iters
    assert res.reason in ("stagnated", "max_iters")
