"""Exact solvers: RVI, policy evaluation, multiplier search and mixing."""

from .evaluation import EvaluationResult, evaluate_policy_exact, evaluate_policy_mc, stationary_distribution
from .lagrange import (
    ConstrainedSolution,
    EtaSearchResult,
    MixtureResult,
    build_mixture,
    eta_search,
    solve_constrained,
)
from .policies import (
    DeterministicPolicy,
    MixturePolicy,
    TimeSharingPolicy,
    ValueTables,
    policy_from_text,
    policy_to_text,
)
from .rvi import bellman_residual, policy_iteration, q_values, rvi_solve
