"""Equitable optimal transport: dual solvers, primal rounding, certificates.

Mass is transported from one discrete measure to another by several agents,
each with its own cost matrix, minimizing the worst per-agent cost.  The
smoothed dual of that minimax problem is maximized by alternating closed-form
potential updates with projected gradient steps on the agent weights; a
margins-plus-rounding pipeline then recovers feasible plans with a certified
duality gap.
"""

from .core import (
    DualState,
    EotError,
    EotProblem,
    InfeasibleInput,
    NonFinite,
    NonPositiveB,
    NotSimplex,
    PlanTensor,
    ShapeMismatch,
    SizeLimit,
    SolverConfig,
    StalledRepair,
    TooLarge,
    ZeroCost,
    default_schedule,
    validate_problem,
)
from .datasets import (
    DatasetSpec,
    gen_fragmented_hypercube,
    gen_gaussian,
    gen_metric_suite,
)
from .diagnostics import (
    GapReport,
    duality_gap,
    eot_error,
    g_range_check,
    max_over_lambda,
    min_over_pi,
    primal_value,
    transport_lp,
)
from .estimators import APGA, PAM, PAME
from .kernels import (
    dual_objective,
    evaluate,
    grad_f,
    grad_g,
    grad_lambda,
    log_mass,
    marginal_residual,
    plan_from_duals,
    project_simplex,
)
from .oracle import GridSpec, OracleResult, brute_saddle, enumerate_transport_vertices
from .rounding import MarginPair, margins, recover_primal, round_plan
from .solvers import (
    IterationRecord,
    SolveResult,
    hamiltonian,
    pam_f_update,
    pam_g_update,
    pam_lambda_update,
    pame_lambda_update,
    pame_y_update,
    solve_apga,
    solve_pam,
    solve_pame,
    zero_cost_plan,
)

__version__ = "0.1.0"

__all__ = [
    "APGA", "DatasetSpec", "DualState", "EotError", "EotProblem", "GapReport",
    "GridSpec", "InfeasibleInput", "IterationRecord", "MarginPair",
    "NonFinite", "NonPositiveB", "NotSimplex", "OracleResult", "PAM", "PAME",
    "PlanTensor", "ShapeMismatch", "SizeLimit", "SolveResult", "SolverConfig",
    "StalledRepair", "TooLarge", "ZeroCost", "brute_saddle", "default_schedule",
    "dual_objective", "duality_gap", "enumerate_transport_vertices",
    "eot_error", "evaluate", "g_range_check", "gen_fragmented_hypercube",
    "gen_gaussian", "gen_metric_suite", "grad_f", "grad_g", "grad_lambda",
    "hamiltonian", "log_mass", "marginal_residual", "margins",
    "max_over_lambda", "min_over_pi", "pam_f_update", "pam_g_update",
    "pam_lambda_update", "pame_lambda_update", "pame_y_update",
    "plan_from_duals", "primal_value", "project_simplex", "recover_primal",
    "round_plan", "solve_apga", "solve_pam", "solve_pame", "transport_lp",
    "validate_problem", "zero_cost_plan",
]
