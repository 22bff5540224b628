"""Exact transition kernel and one-step samplers.

All per-user dynamics go through :func:`local_next`, which is reused by the
tabular model builder and by the simulator so the three views of the model
cannot drift apart.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from ..errors import ActionMasked
from .model import (
    Action,
    ActionKind,
    CostSample,
    Feedback,
    FrHarq,
    GeneralHarq,
    ModelConfig,
    Outcome,
    SystemState,
)

IDLE, NEW, RETX = 0, 1, 2


def local_next(rx, tx, r, kind, success, N, r_max):
    """Next (rx, tx, r) of one user for one slot.

    kind is IDLE for every user that is not targeted this slot.
    """
    if kind == IDLE:
        return min(rx + 1, N), min(tx + 1, N), r
    if kind == NEW:
        if success:
            return 1, 1, 0
        return min(rx + 1, N), 1, min(1, r_max)
    t = min(tx + 1, N)
    if success:
        return t, t, 0
    return min(rx + 1, N), t, min(r + 1, r_max)


def fr_local_next(rx, pulled, success, N, n_s):
    """Receiver age of one user after an FR block of n_s slots (or one idle slot)."""
    if pulled is None:
        return min(rx + 1, N)
    if pulled and success:
        return n_s
    return min(rx + n_s, N)


def valid_actions(state: SystemState, protocol) -> List[Action]:
    acts = [Action.idle()] + [Action.new(j) for j in range(1, protocol.M + 1)]
    if isinstance(protocol, GeneralHarq):
        acts += [Action.retx(j) for j in range(1, protocol.M + 1) if state.retx[j - 1] >= 1]
    return acts


def check_action(state, action, protocol):
    if action.is_idle:
        return
    if not 1 <= action.user <= protocol.M:
        raise ActionMasked(f"{action} targets a user outside 1..{protocol.M}")
    if action.kind is ActionKind.RETX:
        if not isinstance(protocol, GeneralHarq):
            raise ActionMasked(f"{action} is not available under {protocol.name}")
        if state.retx[action.user - 1] < 1:
            raise ActionMasked(f"{action} needs a pending failed packet for user {action.user}")


def error_prob(state, action, protocol) -> float:
    """Failure probability of a transmit action (0 for Idle)."""
    if action.is_idle:
        return 0.0
    j = action.user - 1
    if isinstance(protocol, FrHarq):
        return protocol.p_block[j]
    table = protocol.error_table()
    r = state.retx[j] if action.kind is ActionKind.RETX else 0
    return table[j][r]


def _kind(action):
    return {ActionKind.IDLE: IDLE, ActionKind.NEW: NEW, ActionKind.RETX: RETX}[action.kind]


def _next_state(state, action, success, config, protocol):
    N = config.N
    if isinstance(protocol, FrHarq):
        n_s = protocol.n_s
        target = None if action.is_idle else action.user - 1
        rx, tx = [], []
        for i, (a, b) in enumerate(zip(state.rx, state.tx)):
            if target is None:
                rx.append(fr_local_next(a, None, False, N, n_s))
                tx.append(min(b + 1, N))
            else:
                rx.append(fr_local_next(a, i == target, success, N, n_s))
                tx.append(n_s if i == target else min(b + n_s, N))
        return SystemState(rx, tx, state.retx)
    target = None if action.is_idle else action.user - 1
    kind = _kind(action)
    users = []
    for i, (a, b, r) in enumerate(state.users()):
        if i == target:
            users.append(local_next(a, b, r, kind, success, N, config.r_max))
        else:
            users.append(local_next(a, b, r, IDLE, False, N, config.r_max))
    rx, tx, rr = zip(*users)
    return SystemState(rx, tx, rr)


def transition_distribution(state, action, config: ModelConfig, protocol) -> List[Tuple[SystemState, float]]:
    """Support of P(. | state, action) with zero-probability branches dropped.

    For FR-HARQ the transition is over a whole decision epoch (one idle slot
    or an n_s-slot block).
    """
    check_action(state, action, protocol)
    if action.is_idle:
        return [(_next_state(state, action, True, config, protocol), 1.0)]
    p = error_prob(state, action, protocol)
    out = {}
    for success, prob in ((True, 1.0 - p), (False, p)):
        if prob <= 0.0:
            continue
        s = _next_state(state, action, success, config, protocol)
        out[s] = out.get(s, 0.0) + prob
    return list(out.items())


def _draw_success(state, action, protocol, rng):
    """Consume channel randomness for one decision epoch and return success."""
    if isinstance(protocol, FrHarq) and protocol.p_symbol is not None and not action.is_idle:
        u = rng.random(protocol.n_s)
        received = int(np.count_nonzero(u >= protocol.p_symbol[action.user - 1]))
        return received >= protocol.k_s
    u = rng.random()
    return u >= error_prob(state, action, protocol)


def step(state, action, config: ModelConfig, protocol, rng):
    """Sample one decision epoch; returns (next_state, Feedback, CostSample).

    Cost is charged on the current state. Under FR-HARQ this runs a whole
    block and the AoI cost is the sum over the block's slots.
    """
    if isinstance(protocol, FrHarq):
        nxt, accruals, _, success = _fr_block(state, action, config, protocol, rng)
        aoi = float(sum(accruals))
    else:
        check_action(state, action, protocol)
        success = _draw_success(state, action, protocol, rng)
        nxt = _next_state(state, action, success, config, protocol)
        aoi = config.aoi_cost(state)
    if action.is_idle:
        fb = Feedback(None)
    else:
        fb = Feedback(Outcome.ACK if success else Outcome.NACK, action.user)
    return nxt, fb, CostSample(aoi, 0 if action.is_idle else 1)


def _fr_block(state, action, config, protocol, rng):
    check_action(state, action, protocol)
    N = config.N
    if action.is_idle:
        rng.random()
        return _next_state(state, action, True, config, protocol), [config.aoi_cost(state)], 1, True
    success = _draw_success(state, action, protocol, rng)
    accruals = [float(sum(wi * min(a + k, N) for wi, a in zip(config.weights, state.rx)))
                for k in range(protocol.n_s)]
    return _next_state(state, action, success, config, protocol), accruals, protocol.n_s, success


def fr_block_step(state, action, config: ModelConfig, protocol: FrHarq, rng):
    """One FR decision epoch: (next_state, per-slot AoI accruals, slots elapsed)."""
    if not isinstance(protocol, FrHarq):
        raise TypeError("fr_block_step needs an FrHarq protocol")
    nxt, accruals, slots, _ = _fr_block(state, action, config, protocol, rng)
    return nxt, accruals, slots
