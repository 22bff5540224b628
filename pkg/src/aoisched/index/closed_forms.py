"""Closed-form single-user analytics and Whittle indices.

All single-user formulas assume an unbounded age; the truncated model
agrees with them once N is large enough that the clamp is rarely hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ThresholdBelowBlockLength
from ..numerics import block_error_prob


@dataclass(frozen=True)
class ArqArmParams:
    w: float = 1.0
    p: float = 0.0

    def __post_init__(self):
        if self.w <= 0:
            raise ValueError("weight must be positive")
        if not 0.0 <= self.p < 1.0:
            raise ValueError("error probability must be in [0, 1)")


@dataclass(frozen=True)
class FrArmParams:
    w: float
    n_s: int
    k_s: int
    p_fr: float

    def __post_init__(self):
        if self.w <= 0:
            raise ValueError("weight must be positive")
        if not 1 <= self.k_s <= self.n_s:
            raise ValueError("need 1 <= k_s <= n_s")
        if not 0.0 <= self.p_fr < 1.0:
            raise ValueError("block error probability must be in [0, 1)")

    @classmethod
    def from_symbol_error(cls, w, n_s, k_s, p_symbol):
        return cls(w, n_s, k_s, block_error_prob(n_s, k_s, p_symbol))


def fr_error_prob(n_s, k_s, p_symbol):
    """Probability that fewer than k_s of n_s coded symbols arrive."""
    return block_error_prob(n_s, k_s, p_symbol)


def whittle_index_arq(delta, arm: ArqArmParams):
    """Subsidy at which sending a fresh update and idling tie at age delta."""
    w, p = arm.w, arm.p
    return 0.5 * w * (1.0 - p) * (delta * (delta + (1.0 + p) / (1.0 - p)))


def whittle_index_fr(delta, arm: FrArmParams):
    """FR-HARQ index with the per-slot subsidy convention.

    Algebraically simplified so that (n_s, k_s) = (1, 1) evaluates with the
    same floating point operations as :func:`whittle_index_arq`.
    """
    w, n, q = arm.w, arm.n_s, arm.p_fr
    lin = (1.0 + (2 * n - 1) * q) / (1.0 - q)
    offset = n * q * (1 - n) / (1.0 - q)
    return 0.5 * w * (1.0 - q) / n * (delta * (delta + lin) + offset)


def whittle_index_fr_expanded(delta, arm: FrArmParams):
    """The index written as the square-completed expression (reference form)."""
    w, n, q = arm.w, arm.n_s, arm.p_fr
    es = n / (1.0 - q)
    a = n * q / (1.0 - q)
    return w / (2.0 * es) * ((delta + a) ** 2 + delta + a - n * n * q / (1.0 - q) ** 2)


def single_user_lagrange_cost(gamma, arm: ArqArmParams, C):
    """Average of w * age + C * 1[transmit] under threshold gamma (ARQ).

    With w = 1 this is the usual single-user Lagrangian threshold cost.
    """
    if gamma < 1:
        raise ValueError("threshold must be >= 1")
    w, p = arm.w, arm.p
    r = p / (1.0 - p)
    return (w * ((gamma - 1) * gamma / 2.0 + gamma / (1.0 - p) + p / (1.0 - p) ** 2) + C / (1.0 - p)) / (gamma + r)


def single_user_closed_forms(gamma, arm: ArqArmParams):
    """(J, C) of the threshold-gamma policy for one ARQ user (J unweighted)."""
    if gamma < 1:
        raise ValueError("threshold must be >= 1")
    p = arm.p
    x = gamma * (1.0 - p) + p
    J = (x * x + p) / (2.0 * (1.0 - p) * x) + 0.5
    return J, 1.0 / x


def optimal_threshold(C, arm: ArqArmParams):
    """Candidate thresholds {floor(x), ceil(x)} (at least 1) and the better one.

    Returns (candidates, best) where best minimizes the single-user cost;
    ties go to the smaller threshold.
    """
    if C < 0:
        raise ValueError("subsidy must be non-negative")
    p = arm.p
    c = C / arm.w
    x = (math.sqrt(2.0 * c * (1.0 - p) + p) - p) / (1.0 - p)
    cands = sorted({max(1, math.floor(x)), max(1, math.ceil(x))})
    costs = [single_user_lagrange_cost(g, arm, C) for g in cands]
    best = cands[0] if costs[0] <= costs[-1] else cands[-1]
    return tuple(cands), best


@dataclass(frozen=True)
class RenewalStats:
    mean_S: float
    second_moment_S: float
    var_S: float


def renewal_stats_fr(arm: FrArmParams) -> RenewalStats:
    """Moments of the slots from the start of a pull to successful decoding."""
    n, q = arm.n_s, arm.p_fr
    es = n / (1.0 - q)
    es2 = n * n * (1.0 + q) / (1.0 - q) ** 2
    var = n * n * q / (1.0 - q) ** 2
    return RenewalStats(es, es2, var)


def fr_threshold_closed_forms(gamma, arm: FrArmParams, C=0.0):
    """(J, C_rate, L) of the FR threshold-gamma policy.

    J is the unweighted per-slot age, C_rate the fraction of slots spent
    transmitting and L = w * J + C * C_rate.
    """
    if gamma < arm.n_s:
        raise ThresholdBelowBlockLength(f"threshold {gamma} is below the block length {arm.n_s}")
    st = renewal_stats_fr(arm)
    idle = gamma - arm.n_s
    J = (st.second_moment_S + idle * st.mean_S) / (2.0 * (idle + st.mean_S)) + (gamma + arm.n_s) / 2.0 - 0.5
    rate = st.mean_S / (idle + st.mean_S)
    return J, rate, arm.w * J + C * rate
