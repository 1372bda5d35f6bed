"""Problem, state and configuration types shared by all solvers.

Every type is an immutable value object: arrays are copied on construction
and marked read-only, so instances are safe to share across threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

INPUT_PROB_TOL = 1e-9     # tolerance for marginals read from text files
SIMPLEX_TOL = 1e-12       # tolerance for internally produced simplex points
FEASIBILITY_TOL = 1e-10   # L1 tolerance for coupling-constraint feasibility
ETA_FLOOR = 1e-6          # below this, double precision cannot resolve the exponents


class EotError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveB(EotError):
    """The target marginal b has a non-positive entry."""


class NotSimplex(EotError):
    """A weight vector is not a probability vector within tolerance."""


class ShapeMismatch(EotError):
    """Input array shapes are inconsistent."""


class ZeroCost(EotError):
    """All cost matrices are zero, so step-size schedules are undefined."""


class NonFinite(EotError):
    """A NaN or infinity appeared in an input or an iterate."""


class StalledRepair(EotError):
    """The margin repair loop cannot make progress (numerical corruption)."""


class InfeasibleInput(EotError):
    """An input violates a feasibility precondition beyond tolerance."""


class SizeLimit(EotError):
    """The instance is too large for the exact method."""


class TooLarge(EotError):
    """The instance exceeds the brute-force oracle caps."""


def _readonly(x: np.ndarray) -> np.ndarray:
    out = np.array(x, dtype=float)
    out.setflags(write=False)
    return out


def _require_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"{name} contains NaN or infinite entries")


@dataclass(frozen=True)
class EotProblem:
    """A validated multi-agent transport instance.

    Attributes
    ----------
    a, b : (n,) marginals; ``a`` may contain zeros, ``b`` is strictly positive.
    costs : (N, n, n) stacked per-agent cost matrices.
    c_inf : largest absolute cost entry over all agents.
    iota : min_j log(b_j), a negative constant used by stopping thresholds.
    """

    a: np.ndarray
    b: np.ndarray
    costs: np.ndarray
    c_inf: float
    iota: float

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def n_agents(self) -> int:
        return self.costs.shape[0]

    @property
    def costs_share_sign(self) -> bool:
        """True when every cost entry is >= 0 or every entry is <= 0."""
        return bool(np.all(self.costs >= 0.0) or np.all(self.costs <= 0.0))


def validate_problem(a, b, costs) -> EotProblem:
    """Check and normalize raw inputs into an :class:`EotProblem`.

    ``costs`` is a list of n-by-n matrices (or an (N, n, n) array).  The
    marginals must sum to one within 1e-9; they are renormalized to machine
    precision so that downstream identities hold at 1e-12.

    Raises
    ------
    NonPositiveB, NotSimplex, ShapeMismatch, NonFinite
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeMismatch("marginals must be one-dimensional")
    if a.shape != b.shape:
        raise ShapeMismatch(f"marginal lengths differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 1:
        raise ShapeMismatch("empty marginals")

    cost_arr = np.asarray(costs, dtype=float)
    if cost_arr.ndim == 2:
        cost_arr = cost_arr[None, :, :]
    if cost_arr.ndim != 3 or cost_arr.shape[0] < 1:
        raise ShapeMismatch("costs must be a nonempty list of square matrices")
    if cost_arr.shape[1:] != (n, n):
        raise ShapeMismatch(
            f"cost matrices must be {n}x{n}, got {cost_arr.shape[1:]}"
        )

    _require_finite("a", a)
    _require_finite("b", b)
    _require_finite("costs", cost_arr)

    if np.any(b <= 0.0):
        raise NonPositiveB("every entry of b must be strictly positive")
    if np.any(a < 0.0):
        raise NotSimplex("a has negative entries")
    if abs(a.sum() - 1.0) > INPUT_PROB_TOL:
        raise NotSimplex(f"sum(a) = {a.sum():.12g}, expected 1")
    if abs(b.sum() - 1.0) > INPUT_PROB_TOL:
        raise NotSimplex(f"sum(b) = {b.sum():.12g}, expected 1")

    a = a / a.sum()
    b = b / b.sum()
    c_inf = float(np.max(np.abs(cost_arr)))
    iota = float(np.min(np.log(b)))
    return EotProblem(
        a=_readonly(a), b=_readonly(b), costs=_readonly(cost_arr),
        c_inf=c_inf, iota=iota,
    )


def _check_simplex(name: str, v: np.ndarray) -> None:
    _require_finite(name, v)
    if np.any(v < 0.0):
        raise NotSimplex(f"{name} has negative entries")
    if abs(v.sum() - 1.0) > SIMPLEX_TOL:
        raise NotSimplex(f"sum({name}) = {v.sum():.17g}, expected 1 within 1e-12")


@dataclass(frozen=True)
class DualState:
    """Dual iterate (f, g, lam) plus the extrapolation memory used by PAME.

    ``lam``, ``lam_prev`` and ``y`` are points in the probability simplex of
    dimension equal to the number of agents.
    """

    f: np.ndarray
    g: np.ndarray
    lam: np.ndarray
    lam_prev: np.ndarray | None = None
    y: np.ndarray | None = None

    def __post_init__(self):
        _require_finite("f", self.f)
        _require_finite("g", self.g)
        _check_simplex("lam", self.lam)
        if self.lam_prev is not None:
            _check_simplex("lam_prev", self.lam_prev)
        if self.y is not None:
            _check_simplex("y", self.y)
        for name in ("f", "g", "lam", "lam_prev", "y"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _readonly(v))


@dataclass(frozen=True)
class PlanTensor:
    """N stacked n-by-n nonnegative transport plans.

    ``feasible`` is only ever set by code that has verified the coupling
    constraints r(sum_k pi^k) = a and c(sum_k pi^k) = b within 1e-10 in L1.
    """

    pi: np.ndarray
    feasible: bool = False

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 3 or pi.shape[1] != pi.shape[2]:
            raise ShapeMismatch("plan tensor must have shape (N, n, n)")
        _require_finite("pi", pi)
        if np.any(pi < 0.0):
            raise EotError("plan tensor has negative entries")
        object.__setattr__(self, "pi", _readonly(pi))


def plan_feasibility_residual(pi: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """L1 distance of the summed plan's marginals from (a, b)."""
    total = pi.sum(axis=0)
    return float(
        np.abs(total.sum(axis=1) - a).sum() + np.abs(total.sum(axis=0) - b).sum()
    )


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters for the iterative solvers.

    The three ``*_tol`` fields are the residual stopping thresholds; a
    ``None`` threshold disables that check so a run is bounded only by
    ``max_iters`` and objective stagnation.  ``apga_lipschitz`` overrides the
    gradient Lipschitz estimate used by the accelerated solver (default
    3 * c_inf**2 / eta).
    """

    epsilon: float = 0.05
    eta: float = 0.05
    tau: float = 0.05
    theta: float = 0.1
    max_iters: int = 100_000
    col_residual_tol: float | None = None
    lambda_step_tol: float | None = None
    lambda_y_tol: float | None = None
    stagnation_tol: float = 1e-12
    apga_lipschitz: float | None = None
    record_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.eta > 0.0:
            raise EotError("eta must be positive")
        if not self.tau > 0.0:
            raise EotError("tau must be positive")
        if not 0.0 < self.theta < 1.0:
            raise EotError("theta must lie strictly between 0 and 1")
        if self.max_iters < 1:
            raise EotError("max_iters must be at least 1")
        if self.record_every < 1:
            raise EotError("record_every must be at least 1")


def default_schedule(problem: EotProblem, epsilon: float,
                     algorithm: str = "pam", theta: float = 0.1,
                     max_iters: int = 1_000_000) -> SolverConfig:
    """Parameter schedule achieving an epsilon-accurate solution.

    Sets eta = min(epsilon / (3 (log(n^2 N) + 1)), c_inf), the step size
    tau = eta / c_inf**2 for ``"pam"`` or eta / (2 c_inf**2) for ``"pame"``,
    and the matching residual stopping thresholds.

    Raises :class:`ZeroCost` when c_inf = 0; in that degenerate case any
    feasible plan is optimal (see :func:`eqot.solvers.zero_cost_plan`) and no
    iterative schedule exists.
    """
    if algorithm not in ("pam", "pame"):
        raise EotError(f"unknown algorithm {algorithm!r}, expected 'pam' or 'pame'")
    if not epsilon > 0.0:
        raise EotError("epsilon must be positive")
    c = problem.c_inf
    if c == 0.0:
        raise ZeroCost(
            "all cost matrices are zero; any feasible plan is optimal "
            "and the step size tau = eta / c_inf**2 is undefined"
        )
    n, big_n = problem.n, problem.n_agents
    eta = min(epsilon / (3.0 * (math.log(n * n * big_n) + 1.0)), c)
    if eta < ETA_FLOOR:
        warnings.warn(
            f"schedule eta = {eta:.3g} is below the {ETA_FLOOR} floor; "
            "clamping (duality-gap certificates remain valid, the epsilon "
            "target may not be met)",
            RuntimeWarning,
        )
        eta = ETA_FLOOR
    col_tol = epsilon / (6.0 * (6.0 * c - eta * problem.iota))
    if algorithm == "pam":
        tau = eta / c ** 2
        lam_tol = eta * epsilon / (18.0 * c ** 2)
        y_tol = None
    else:
        tau = eta / (2.0 * c ** 2)
        lam_tol = eta * epsilon / (60.0 * (1.0 - theta) * c ** 2)
        y_tol = eta * epsilon / (42.0 * c ** 2)
    return SolverConfig(
        epsilon=epsilon, eta=eta, tau=tau, theta=theta, max_iters=max_iters,
        col_residual_tol=col_tol, lambda_step_tol=lam_tol, lambda_y_tol=y_tol,
    )
