"""Optimistic model-based learners: UCRL2 with value iteration, and UCRL2 with
the Whittle-index policy in place of value iteration (standard ARQ only).

Both estimate one error probability per (user, retransmission count) pair,
plan with optimistic (lower) error estimates, and adapt the transmission
price eta from the lifetime transmission rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..env.model import StandardArq, n_actions
from ..env.sim import Env, TraceRecorder
from ..env.spaces import StateSpace
from ..env.tabular import build_tabular
from ..errors import StateSpaceTooLarge
from ..index.policies import WhittlePolicy
from ..numerics import spawn_rngs
from ..planning.rvi import rvi_solve


@dataclass
class UcrlState:
    counts: np.ndarray          # N_k(j, r): attempts before the current episode
    fails: np.ndarray           # E_k(j, r)
    visits: np.ndarray          # v_k(j, r): attempts within the current episode
    n_states: int
    n_actions: int
    rho: float
    U: float
    alpha: float
    eta: float = 0.0
    episode: int = 0
    t_k: int = 0
    tx_total: float = 0.0
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, M, r_max, n_states, n_act, rho, U, alpha, eta0=0.0):
        z = np.zeros((M, r_max + 1))
        return cls(z.copy(), z.copy(), z.copy(), n_states, n_act, rho, U, alpha, eta0)

    @property
    def g_hat(self):
        return self.fails / np.maximum(self.counts, 1.0)

    def bonus(self, t):
        return np.sqrt(self.U * math.log(self.n_states * self.n_actions * max(t, 1) / self.rho)
                       / np.maximum(self.counts, 1.0))

    def g_tilde(self, t):
        return np.maximum(0.0, self.g_hat - self.bonus(t))

    def start_episode(self, t, lam):
        """Fold in-episode visits into the counts and update eta."""
        self.counts += self.visits
        self.visits[:] = 0.0
        self.episode += 1
        self.t_k = t
        if t > 0:
            self.eta = max(0.0, self.eta + self.alpha * (self.tx_total / t - lam))


def _pair(env, a):
    """(user, r) pair of an action index, or None for Idle."""
    j, kind = env.target(a)
    if j is None:
        return None
    return j, (env.r[j] if a > env.M else 0)


def _run(config, protocol, lam, horizon, seed, state, planner, record_states):
    chan_rng, _ = spawn_rngs(seed, 2)
    env = Env(config, protocol, chan_rng)
    rec = TraceRecorder(int(horizon), config.M, record_states)
    etas = np.zeros(int(horizon))
    # fails must not leak into g_hat before the episode ends: keep them separate
    pending_fails = np.zeros_like(state.fails)
    t = 0
    while t < horizon:
        state.fails += pending_fails
        pending_fails[:] = 0.0
        state.start_episode(t, lam)
        gt = state.g_tilde(t)
        policy = planner(gt, state.eta)
        state.history.append((t, state.eta, gt.copy()))
        while t < horizon:
            pre = np.array((env.rx, env.tx, env.r)) if record_states else None
            a = int(policy.act(env))
            pair = _pair(env, a)
            ack, aoi, tx, slots = env.step_index(a)
            rec.add(env, a, ack, aoi, tx, slots, pre)
            etas[t] = state.eta
            state.tx_total += tx
            t += 1
            if pair is not None:
                state.visits[pair] += 1
                if not ack:
                    pending_fails[pair] += 1
                if state.visits[pair] >= max(1.0, state.counts[pair]):
                    break
    state.fails += pending_fails
    state.counts += state.visits
    state.visits[:] = 0.0
    return rec.finish(seed, eta=etas, episodes=state.episode, g_tilde=state.g_tilde(t), g_hat=state.g_hat,
                      history=state.history)


def ucrl2_vi_run(config, protocol, lam=None, rho=0.05, U=0.5, alpha=10.0, horizon=10_000, seed=0,
                 rvi_eps=1e-4, rvi_max_iter=20_000, state_cap=200_000, record_states=False, return_state=False):
    """UCRL2 with relative value iteration on the optimistic Lagrangian model.

    Episodes follow the doubling rule: an episode ends once the executed
    (user, r) pair has been tried as often within the episode as before it.
    RVI is warm-started from the previous episode and used as an anytime
    planner: after `rvi_max_iter` sweeps the current greedy policy is kept.
    """
    lam = config.lam if lam is None else float(lam)
    try:
        space = StateSpace(config, protocol, reachable=not isinstance(protocol, StandardArq), cap=state_cap)
    except StateSpaceTooLarge as exc:
        raise StateSpaceTooLarge(f"{exc}; use ucrl2_whittle_run for large standard-ARQ instances") from None
    model = build_tabular(config, protocol, space=space)
    st = UcrlState.fresh(config.M, config.r_max, space.size, n_actions(protocol), rho, U, alpha)
    warm = [None]

    def planner(gt, eta):
        pol, vt = rvi_solve(model.with_errors(gt), eta=eta, epsilon=rvi_eps, h0=warm[0],
                           max_iter=rvi_max_iter, strict=False)
        warm[0] = vt.h
        return pol

    tr = _run(config, protocol, lam, horizon, seed, st, planner, record_states)
    return (tr, st) if return_state else tr


def ucrl2_whittle_run(config, protocol, lam=None, rho=0.05, U=0.5, alpha=5.0, horizon=10_000, seed=0,
                      record_states=False, return_state=False):
    """UCRL2 estimating one error probability per user and acting with the
    Whittle-index policy built from the optimistic estimates and eta."""
    if not isinstance(protocol, StandardArq):
        raise TypeError("UCRL2-Whittle needs a standard ARQ protocol")
    lam = config.lam if lam is None else float(lam)
    n_states = config.N ** config.M
    st = UcrlState.fresh(config.M, 0, n_states, n_actions(protocol), rho, U, alpha)
    policy = WhittlePolicy(config, protocol, 0.0, errors=np.zeros(config.M))

    def planner(gt, eta):
        policy.set_errors(gt[:, 0])
        policy.eta = eta
        return policy

    tr = _run(config, protocol, lam, horizon, seed, st, planner, record_states)
    return (tr, st) if return_state else tr
