"""Shared instance builders and independent oracles for the test suite."""

import numpy as np

from eqot import DualState, EotProblem, validate_problem
from eqot.kernels import log_potentials


def random_problem(n=4, n_agents=2, seed=0, cost_low=0.0, cost_high=1.0,
                   positive_a=True) -> EotProblem:
    rng = np.random.default_rng(seed)
    a = rng.dirichlet(np.ones(n) * 3.0)
    if positive_a:
        a = np.maximum(a, 1e-3)
    b = np.maximum(rng.dirichlet(np.ones(n) * 3.0), 1e-3)
    costs = rng.uniform(cost_low, cost_high, (n_agents, n, n))
    return validate_problem(a / a.sum(), b / b.sum(), costs)


def random_state(problem: EotProblem, seed=0, scale=0.5) -> DualState:
    rng = np.random.default_rng(seed)
    lam = rng.dirichlet(np.ones(problem.n_agents))
    return DualState(
        f=scale * rng.standard_normal(problem.n),
        g=scale * rng.standard_normal(problem.n),
        lam=lam,
        lam_prev=rng.dirichlet(np.ones(problem.n_agents)),
    )


def naive_mass(f, g, lam, problem, eta):
    """Direct double-precision exp-sum; valid only for small |log potentials|."""
    return float(np.exp(log_potentials(f, g, lam, problem.costs, eta)).sum())


def naive_plan(f, g, lam, problem, eta):
    z = np.exp(log_potentials(f, g, lam, problem.costs, eta))
    return z / z.sum()


def central_difference(fun, x, h=1e-5):
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        out[i] = (fun(x + step) - fun(x - step)) / (2.0 * h)
    return out


def random_plans_row_feasible(n, n_agents, a, seed):
    """Random nonnegative plans whose summed row marginal equals a exactly."""
    rng = np.random.default_rng(seed)
    pi = rng.uniform(0.1, 1.0, (n_agents, n, n))
    rows = pi.sum(axis=(0, 2))
    return pi * (a / rows)[None, :, None]
