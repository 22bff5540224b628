"""Whittle indices, single-user closed forms and baseline policies."""

from .closed_forms import (
    ArqArmParams,
    FrArmParams,
    RenewalStats,
    fr_error_prob,
    fr_threshold_closed_forms,
    optimal_threshold,
    renewal_stats_fr,
    single_user_closed_forms,
    single_user_lagrange_cost,
    whittle_index_arq,
    whittle_index_fr,
)
from .numeric import indifference_subsidy_numeric, truncation_level
from .policies import (
    GreedyPolicy,
    RoundRobinPolicy,
    WhittlePolicy,
    greedy_decide,
    index_table,
    round_robin_decide,
    whittle_eta,
    wi_policy_decide,
)
