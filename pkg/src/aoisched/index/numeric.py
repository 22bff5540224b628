"""Numeric Whittle index: the subsidy at which a single arm is indifferent.

Independent of the closed forms; it only uses the exact single-user MDP.
"""

from __future__ import annotations

import math

from ..env.model import FrHarq, ModelConfig, StandardArq
from ..env.tabular import build_tabular
from ..errors import BracketError
from ..planning.rvi import policy_iteration, rvi_solve
from .closed_forms import ArqArmParams, FrArmParams


def truncation_level(delta, p, n_s=1, tail=1e-12, factor=20):
    """Age cap for the single-arm oracle: at least factor*delta, and long
    enough that a run of failures from delta reaches the cap with
    probability below `tail`."""
    N = factor * delta
    if p > 0:
        N = max(N, delta + n_s * (math.ceil(math.log(tail) / math.log(p)) + 2))
    return max(N, delta + 2 * n_s + 2)


def single_arm_model(arm, N, fr_subsidy="per_slot"):
    if isinstance(arm, FrArmParams):
        proto = FrHarq.from_block_errors(arm.n_s, arm.k_s, (arm.p_fr,))
        p = arm.p_fr
    else:
        proto = StandardArq((arm.p,))
        p = arm.p
    cfg = ModelConfig(1, N, 0, (arm.w,))
    return build_tabular(cfg, proto, fr_subsidy=fr_subsidy), p


def transmits_at(model, delta, C, solver="pi", warm=None):
    s = model.space.index_arrays([delta], [1], [0])
    if solver == "pi":
        pol, vt = policy_iteration(model, eta=C, actions0=warm)
    else:
        pol, vt = rvi_solve(model, eta=C, epsilon=1e-11)
    return pol.actions[s] != 0, pol.actions


def indifference_subsidy_numeric(delta, arm, N=None, solver="pi", tol=1e-8, fr_subsidy="per_slot"):
    """Bisection on the subsidy C until the optimal action at age `delta`
    switches from transmit to idle.

    `arm` is an ArqArmParams or FrArmParams; N defaults to
    :func:`truncation_level`.
    """
    n_s = arm.n_s if isinstance(arm, FrArmParams) else 1
    p = arm.p_fr if isinstance(arm, FrArmParams) else arm.p
    if N is None:
        N = truncation_level(delta, p, n_s)
    model, _ = single_arm_model(arm, N, fr_subsidy)
    lo = 0.0
    tx, warm = transmits_at(model, delta, lo, solver)
    if not tx:
        raise BracketError(f"arm idles at age {delta} even without a transmission charge")
    hi = max(1.0, arm.w * delta)
    for _ in range(200):
        tx, acts = transmits_at(model, delta, hi, solver, warm)
        if not tx:
            break
        lo, warm = hi, acts
        hi *= 2.0
    else:
        raise BracketError(f"arm transmits at age {delta} for every subsidy tried")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        tx, acts = transmits_at(model, delta, mid, solver, warm)
        if tx:
            lo = mid
        else:
            hi = mid
        warm = acts
    return 0.5 * (lo + hi)
