"""Scikit-learn style estimator wrappers around the functional solvers.

Hyperparameters live in ``__init__`` untouched (so ``get_params`` /
``set_params`` / ``clone`` compose with the wider ecosystem); all resolution
and validation happens in ``fit``.  After fitting, the rounded feasible plans
and the dual solution are available as trailing-underscore attributes.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import SolverConfig, default_schedule, validate_problem
from .diagnostics import GapReport, duality_gap
from .solvers import solve_apga, solve_pam, solve_pame


class _BaseEotEstimator(BaseEstimator):
    """Shared fit machinery; subclasses pick the solver and schedule."""

    _algorithm = "pam"

    def __init__(self, epsilon=0.05, eta=None, tau=None, max_iters=1_000_000,
                 use_stopping=True, stagnation_tol=1e-12, record_every=1,
                 seed=0):
        self.epsilon = epsilon
        self.eta = eta
        self.tau = tau
        self.max_iters = max_iters
        self.use_stopping = use_stopping
        self.stagnation_tol = stagnation_tol
        self.record_every = record_every
        self.seed = seed

    def _config(self, problem) -> SolverConfig:
        schedule_alg = "pame" if self._algorithm == "pame" else "pam"
        theta = getattr(self, "theta", 0.1)
        config = default_schedule(problem, self.epsilon, algorithm=schedule_alg,
                                  theta=theta, max_iters=self.max_iters)
        overrides = {
            "stagnation_tol": self.stagnation_tol,
            "record_every": self.record_every,
            "seed": self.seed,
        }
        if self.eta is not None:
            overrides["eta"] = self.eta
            if self.tau is None:
                # Keep the step consistent with the overridden regularization.
                scale = 2.0 if self._algorithm == "pame" else 1.0
                overrides["tau"] = self.eta / (scale * problem.c_inf ** 2)
        if self.tau is not None:
            overrides["tau"] = self.tau
        if not self.use_stopping:
            overrides.update(col_residual_tol=None, lambda_step_tol=None,
                             lambda_y_tol=None)
        lips = getattr(self, "lipschitz", None)
        if lips is not None:
            overrides["apga_lipschitz"] = lips
        return dataclasses.replace(config, **overrides)

    def _solve(self, problem, config):
        raise NotImplementedError

    def fit(self, costs, a=None, b=None):
        """Solve the instance given by per-agent costs and marginals.

        Parameters
        ----------
        costs : array-like of shape (N, n, n) or list of (n, n) matrices.
        a, b : optional (n,) marginals; uniform when omitted.
        """
        cost_arr = np.asarray(costs, dtype=float)
        if cost_arr.ndim == 2:
            cost_arr = cost_arr[None, :, :]
        n = cost_arr.shape[-1]
        if a is None:
            a = np.full(n, 1.0 / n)
        if b is None:
            b = np.full(n, 1.0 / n)
        problem = validate_problem(a, b, cost_arr)
        config = self._config(problem)
        result = self._solve(problem, config)
        self.problem_ = problem
        self.config_ = config
        self.result_ = result
        self.plan_ = result.plan.pi
        self.lambda_ = result.lam_hat
        self.f_ = result.state.f
        self.g_ = result.state.g
        self.n_iter_ = result.iterations
        self.reason_ = result.reason
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError("call fit before using this estimator")

    def certify(self, method: str = "exact") -> GapReport:
        """Duality-gap certificate for the fitted plan."""
        self._check_fitted()
        return duality_gap(self.plan_, self.lambda_, self.problem_,
                           method=method, epsilon=self.config_.epsilon)


class PAM(_BaseEotEstimator):
    """Projected alternating maximization solver in estimator form."""

    _algorithm = "pam"

    def _solve(self, problem, config):
        return solve_pam(problem, config)


class PAME(_BaseEotEstimator):
    """Alternating maximization with extrapolated weight steps."""

    _algorithm = "pame"

    def __init__(self, epsilon=0.05, eta=None, tau=None, theta=0.1,
                 max_iters=1_000_000, use_stopping=True, stagnation_tol=1e-12,
                 record_every=1, seed=0):
        super().__init__(epsilon=epsilon, eta=eta, tau=tau,
                         max_iters=max_iters, use_stopping=use_stopping,
                         stagnation_tol=stagnation_tol,
                         record_every=record_every, seed=seed)
        self.theta = theta

    def _solve(self, problem, config):
        return solve_pame(problem, config)


class APGA(_BaseEotEstimator):
    """Accelerated projected gradient ascent on all dual blocks."""

    _algorithm = "apga"

    def __init__(self, epsilon=0.05, eta=None, tau=None, lipschitz=None,
                 max_iters=1_000_000, use_stopping=True, stagnation_tol=1e-12,
                 record_every=1, seed=0):
        super().__init__(epsilon=epsilon, eta=eta, tau=tau,
                         max_iters=max_iters, use_stopping=use_stopping,
                         stagnation_tol=stagnation_tol,
                         record_every=record_every, seed=seed)
        self.lipschitz = lipschitz

    def _solve(self, problem, config):
        return solve_apga(problem, config)
