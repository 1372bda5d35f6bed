import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqot import (
    DualState,
    NonFinite,
    dual_objective,
    grad_f,
    grad_g,
    grad_lambda,
    log_mass,
    marginal_residual,
    plan_from_duals,
    project_simplex,
    validate_problem,
)
from eqot.kernels import evaluate
from eqot.solvers import pam_f_update

from helpers import (
    central_difference,
    naive_mass,
    naive_plan,
    random_problem,
    random_state,
)


def _trivial_problem(n_agents=1):
    costs = np.zeros((n_agents, 2, 2))
    return validate_problem([0.5, 0.5], [0.5, 0.5], costs)


def _zero_state(n_agents=1):
    lam = np.full(n_agents, 1.0 / n_agents)
    return DualState(f=np.zeros(2), g=np.zeros(2), lam=lam)


def test_log_mass_all_exponents_zero():
    assert log_mass(_zero_state(), _trivial_problem(), 1.0) == pytest.approx(
        math.log(4.0), abs=1e-14)


def test_log_mass_two_agents():
    assert log_mass(_zero_state(2), _trivial_problem(2), 1.0) == pytest.approx(
        math.log(8.0), abs=1e-14)


def test_log_mass_matches_naive_summation():
    for seed in range(8):
        p = random_problem(n=5, n_agents=3, seed=seed)
        s = random_state(p, seed=seed)
        got = log_mass(s, p, eta=1.3)
        want = math.log(naive_mass(s.f, s.g, s.lam, p, 1.3))
        assert got == pytest.approx(want, rel=1e-12)


def test_log_mass_survives_huge_exponents():
    p = random_problem(n=4, n_agents=2, seed=1)
    s = DualState(f=np.full(4, 800.0), g=np.full(4, 900.0),
                  lam=np.array([0.5, 0.5]))
    val = log_mass(s, p, eta=1.0)
    assert np.isfinite(val)
    assert val == pytest.approx(1700.0, abs=10.0)


def test_log_mass_rejects_nan():
    p = _trivial_problem()
    with pytest.raises(NonFinite):
        evaluate(np.array([np.nan, 0.0]), np.zeros(2), np.array([1.0]), p, 1.0)


def test_dual_objective_trivial_value():
    assert dual_objective(_zero_state(), _trivial_problem(), 1.0) == pytest.approx(
        -math.log(4.0) - 1.0, abs=1e-14)


def test_dual_objective_after_f_update_mass_is_one():
    # Exact maximization in f renormalizes total mass to 1, so the objective
    # collapses to <f, a> + <g, b> - eta.
    for seed in range(5):
        p = random_problem(n=6, n_agents=2, seed=seed)
        s = random_state(p, seed=seed + 10)
        f_new = pam_f_update(s, p, eta=0.7)
        s2 = DualState(f=f_new, g=s.g, lam=s.lam)
        assert log_mass(s2, p, 0.7) == pytest.approx(0.0, abs=1e-12)
        expected = float(f_new @ p.a + s.g @ p.b) - 0.7
        assert dual_objective(s2, p, 0.7) == pytest.approx(expected, abs=1e-10)


def test_plan_uniform_on_zero_costs():
    for n_agents in (1, 3):
        p = _trivial_problem(n_agents)
        plan = plan_from_duals(_zero_state(n_agents), p, 1.0)
        assert np.allclose(plan.pi, 1.0 / (n_agents * 4), atol=1e-15)


def test_plan_normalization_always_one():
    for seed in range(10):
        p = random_problem(n=5, n_agents=2, seed=seed)
        s = random_state(p, seed=seed, scale=3.0)
        plan = plan_from_duals(s, p, eta=0.4)
        assert plan.pi.sum() == pytest.approx(1.0, abs=1e-12)


def test_plan_matches_naive_formula():
    for seed in range(8):
        p = random_problem(n=4, n_agents=3, seed=seed)
        s = random_state(p, seed=seed)
        got = plan_from_duals(s, p, eta=1.1).pi
        want = naive_plan(s.f, s.g, s.lam, p, 1.1)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-300)


def test_plan_equals_unnormalized_kernel_after_f_update():
    # With total mass 1 the normalization is the identity, so the plan equals
    # the raw exponentiated potential tensor.
    p = random_problem(n=5, n_agents=2, seed=4)
    s = random_state(p, seed=4)
    eta = 0.8
    f_new = pam_f_update(s, p, eta)
    pi = plan_from_duals(DualState(f=f_new, g=s.g, lam=s.lam), p, eta).pi
    raw = np.exp((f_new[None, :, None] + s.g[None, None, :]
                  - s.lam[:, None, None] * p.costs) / eta)
    assert np.allclose(pi, raw, rtol=1e-10)


def test_gradients_uniform_state():
    p = validate_problem([0.3, 0.7], [0.5, 0.5], np.zeros((2, 2, 2)))
    s = _zero_state(2)
    np.testing.assert_allclose(grad_f(s, p, 1.0), p.a - 0.5, atol=1e-14)
    np.testing.assert_allclose(grad_g(s, p, 1.0), p.b - 0.5, atol=1e-14)
    np.testing.assert_allclose(grad_lambda(s, p, 1.0), 0.0, atol=1e-14)


def test_grad_f_zero_after_f_update():
    for seed in range(5):
        p = random_problem(n=5, n_agents=3, seed=seed)
        s = random_state(p, seed=seed)
        f_new = pam_f_update(s, p, eta=0.6)
        g = grad_f(DualState(f=f_new, g=s.g, lam=s.lam), p, 0.6)
        assert np.abs(g).max() <= 1e-10


def test_gradients_match_finite_differences():
    p = random_problem(n=4, n_agents=3, seed=7)
    s = random_state(p, seed=7)
    eta = 0.9

    def obj_f(f):
        return evaluate(f, s.g, s.lam, p, eta, with_plan=False).objective

    def obj_g(g):
        return evaluate(s.f, g, s.lam, p, eta, with_plan=False).objective

    def obj_lam(lam):
        return evaluate(s.f, s.g, lam, p, eta, with_plan=False).objective

    gf, gg, gl = grad_f(s, p, eta), grad_g(s, p, eta), grad_lambda(s, p, eta)
    for got, fun, x in ((gf, obj_f, s.f), (gg, obj_g, s.g)):
        fd = central_difference(fun, x)
        assert np.linalg.norm(got - fd) <= 1e-6 * max(np.linalg.norm(fd), 1e-3)
    fd = central_difference(obj_lam, s.lam)
    assert np.linalg.norm(gl - fd) <= 1e-6 * max(np.linalg.norm(fd), 1e-3)


def test_lambda_gradient_lipschitz_bound():
    # The weight gradient is c_inf^2 / eta Lipschitz; checked as an inequality.
    eta = 0.7
    for seed in range(10):
        p = random_problem(n=4, n_agents=3, seed=seed, cost_high=2.0)
        rng = np.random.default_rng(seed + 50)
        f = rng.standard_normal(4)
        g = rng.standard_normal(4)
        lam1 = rng.dirichlet(np.ones(3))
        lam2 = rng.dirichlet(np.ones(3))
        g1 = evaluate(f, g, lam1, p, eta).agent_costs
        g2 = evaluate(f, g, lam2, p, eta).agent_costs
        lhs = np.linalg.norm(g1 - g2)
        rhs = p.c_inf ** 2 * np.linalg.norm(lam1 - lam2) / eta
        assert lhs <= rhs + 1e-8


def test_project_simplex_fixed_point():
    np.testing.assert_allclose(project_simplex(np.array([0.5, 0.5])),
                               [0.5, 0.5], atol=1e-15)


def test_project_simplex_clipping_case():
    # Independent oracle: fine-grid minimization of ||x - v||^2 on the simplex.
    v = np.array([1.2, -0.2])
    grid = np.linspace(0.0, 1.0, 200001)
    dists = (grid - v[0]) ** 2 + (1.0 - grid - v[1]) ** 2
    best = grid[np.argmin(dists)]
    got = project_simplex(v)
    assert got == pytest.approx([best, 1.0 - best], abs=1e-5)
    np.testing.assert_allclose(got, [1.0, 0.0], atol=1e-12)


def test_project_simplex_symmetry():
    np.testing.assert_allclose(project_simplex(np.array([2.0, 2.0])),
                               [0.5, 0.5], atol=1e-15)


def test_project_simplex_singleton():
    np.testing.assert_allclose(project_simplex(np.array([3.7])), [1.0])


def test_project_simplex_rejects_nan():
    with pytest.raises(NonFinite):
        project_simplex(np.array([np.nan, 0.5]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=8))
def test_project_simplex_properties(values):
    v = np.array(values)
    proj = project_simplex(v)
    assert np.all(proj >= 0.0)
    assert abs(proj.sum() - 1.0) <= 1e-12
    # Idempotence.
    np.testing.assert_allclose(project_simplex(proj), proj, atol=1e-12)


def test_project_simplex_nonexpansive():
    rng = np.random.default_rng(0)
    for _ in range(50):
        u = rng.standard_normal(6) * 3
        v = rng.standard_normal(6) * 3
        pu, pv = project_simplex(u), project_simplex(v)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12


def test_marginal_residual_feasible_plan():
    p = _trivial_problem()
    plan = np.array([[[0.25, 0.25], [0.25, 0.25]]])
    assert marginal_residual(plan, p) == (0.0, 0.0)


def test_marginal_residual_hand_plan():
    p = _trivial_problem()
    plan = np.array([[[0.6, 0.0], [0.0, 0.4]]])
    row, col = marginal_residual(plan, p)
    assert row == pytest.approx(0.2, abs=1e-15)
    assert col == pytest.approx(0.2, abs=1e-15)


def test_marginal_residual_zero_rows_after_f_update():
    p = random_problem(n=5, n_agents=2, seed=9)
    s = random_state(p, seed=9)
    f_new = pam_f_update(s, p, eta=0.5)
    plan = plan_from_duals(DualState(f=f_new, g=s.g, lam=s.lam), p, 0.5)
    row, _ = marginal_residual(plan, p)
    assert row <= 1e-10


def test_log_domain_naive_equivalence_moderate_exponents():
    # With |log potentials| <= 30 both routes are exact to 1e-12 relative.
    for seed in range(5):
        p = random_problem(n=4, n_agents=2, seed=seed, cost_high=5.0)
        rng = np.random.default_rng(seed)
        f = rng.uniform(-3, 3, 4)
        g = rng.uniform(-3, 3, 4)
        lam = rng.dirichlet(np.ones(2))
        eta = 0.5
        lmax = np.abs((f[None, :, None] + g[None, None, :]
                       - lam[:, None, None] * p.costs) / eta).max()
        assert lmax <= 30
        ev = evaluate(f, g, lam, p, eta)
        assert ev.log_mass == pytest.approx(
            math.log(naive_mass(f, g, lam, p, eta)), rel=1e-12)
        assert np.allclose(ev.plan, naive_plan(f, g, lam, p, eta), rtol=1e-12)
