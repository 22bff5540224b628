"""Whittle-index policy and the greedy / round-robin baselines."""

from __future__ import annotations

import numpy as np

from ..env.model import Action, FrHarq, GeneralHarq, StandardArq
from ..planning.policies import DeterministicPolicy
from .closed_forms import ArqArmParams, FrArmParams, whittle_index_arq, whittle_index_fr


def _pick(indices, eta):
    """Action index from a vector of per-user indices (lowest user wins ties)."""
    j = int(np.argmax(indices))
    return j + 1 if indices[j] >= eta else 0


class WhittlePolicy:
    """Serve the user with the largest index if it is at least eta, else idle.

    `errors` overrides the protocol's per-user error probabilities (block
    errors under FR-HARQ); learners pass their optimistic estimates here.
    """

    name = "whittle"

    def __init__(self, config, protocol, eta=0.0, errors=None):
        if isinstance(protocol, GeneralHarq):
            raise TypeError("the Whittle-index policy is defined for standard ARQ and FR-HARQ only")
        self.config = config
        self.protocol = protocol
        self.eta = float(eta)
        self.w = np.asarray(config.weights, dtype=float)
        if errors is None:
            errors = protocol.p if isinstance(protocol, StandardArq) else protocol.p_block
        self.set_errors(errors)

    def set_errors(self, errors):
        self.p = np.asarray(errors, dtype=float)
        if isinstance(self.protocol, FrHarq):
            n, k = self.protocol.n_s, self.protocol.k_s
            self._arms = [FrArmParams(w, n, k, q) for w, q in zip(self.w, self.p)]
            self._fn = whittle_index_fr
        else:
            self._arms = [ArqArmParams(w, q) for w, q in zip(self.w, self.p)]
            self._fn = whittle_index_arq

    def indices(self, rx):
        return np.array([self._fn(d, arm) for d, arm in zip(rx, self._arms)])

    def reset(self, rng=None):
        pass

    def act(self, env):
        return _pick(self.indices(env.rx), self.eta)

    def decide(self, state):
        return Action.from_index(_pick(self.indices(state.rx), self.eta), self.config.M)

    def tabulate(self, space):
        rx = space.components()[0].astype(float)
        idx = np.stack([self._fn(rx[:, j], arm) for j, arm in enumerate(self._arms)], axis=1)
        j = np.argmax(idx, axis=1)
        acts = np.where(idx[np.arange(len(j)), j] >= self.eta, j + 1, 0)
        return DeterministicPolicy(space, acts, self.eta)


class GreedyPolicy:
    """Send a fresh update to the user with the largest receiver age."""

    name = "greedy"

    def __init__(self, config=None, protocol=None):
        pass

    def reset(self, rng=None):
        pass

    def act(self, env):
        return int(np.argmax(env.rx)) + 1

    def decide(self, state):
        return greedy_decide(state)

    def tabulate(self, space):
        rx = space.components()[0]
        return DeterministicPolicy(space, np.argmax(rx, axis=1) + 1)


class RoundRobinPolicy:
    """Send a fresh update to users 1..M in turn, one per decision epoch."""

    name = "round-robin"

    def __init__(self, config, protocol=None):
        self.M = config.M

    def reset(self, rng=None):
        pass

    def act(self, env):
        return env.t % self.M + 1

    def phase_tables(self, space):
        ones = np.ones(space.size)
        return [[(np.full(space.size, k + 1, dtype=np.int64), ones)] for k in range(self.M)]


def greedy_decide(state):
    return Action.new(int(np.argmax(state.rx)) + 1)


def round_robin_decide(t, M):
    return Action.new(int(t) % M + 1)


def wi_policy_decide(state, eta, config, protocol):
    return WhittlePolicy(config, protocol, eta).decide(state)


def index_table(arm, deltas):
    """Rows (delta, index) for one arm, for export."""
    fn = whittle_index_fr if isinstance(arm, FrArmParams) else whittle_index_arq
    return [(int(d), float(fn(d, arm))) for d in deltas]


def whittle_eta(config, protocol, lam=None, horizon=20_000, seed=0, state_cap=200_000, rel_tol=1e-6):
    """Smallest price eta at which the WI policy's transmission rate is <= lam.

    The rate is non-increasing in eta, so bisection suffices. Rates are exact
    when the state space fits under `state_cap`, otherwise simulated with a
    fixed seed (common random numbers across probes). Returns (eta, C).
    """
    from ..env.sim import simulate
    from ..env.spaces import StateSpace
    from ..errors import StateSpaceTooLarge
    from ..planning.evaluation import evaluate_policy_exact

    lam = config.lam if lam is None else float(lam)
    try:
        space = StateSpace(config, protocol, cap=state_cap)
    except StateSpaceTooLarge:
        space = None

    def rate(eta):
        pol = WhittlePolicy(config, protocol, eta)
        if space is not None:
            return evaluate_policy_exact(pol.tabulate(space), config, protocol).C
        return simulate(config, protocol, pol, horizon, seed, record_states=False).C

    c0 = rate(0.0)
    if c0 <= lam:
        return 0.0, c0
    probe = WhittlePolicy(config, protocol, 0.0)
    hi = float(probe.indices(np.full(config.M, config.N)).max()) * 2.0 + 1.0
    c_hi = rate(hi)
    lo = 0.0
    while hi - lo > rel_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        c = rate(mid)
        if c <= lam:
            hi, c_hi = mid, c
        else:
            lo = mid
    return hi, c_hi
