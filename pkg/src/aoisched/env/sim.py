"""Seeded simulator and run traces.

Randomness: a run seeded with ``seed`` spawns two PCG64 streams from
``SeedSequence(seed)``: the first drives the channel, the second is handed
to the policy. The channel consumes exactly one uniform per decision epoch
(n_s uniforms for an FR pull when symbol erasure probabilities are known).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ActionMasked
from ..numerics import spawn_rngs
from .kernel import IDLE, NEW, RETX, fr_local_next, local_next
from .model import Action, CostSample, Feedback, FrHarq, GeneralHarq, ModelConfig, Outcome, SystemState, n_actions

_FEEDBACK = {-1: None, 0: Outcome.NACK, 1: Outcome.ACK}


@dataclass
class RunTrace:
    """Per-decision records of one simulated run.

    ``tx`` holds the transmission charge of each epoch (slots spent
    transmitting), ``slots`` the epoch length; both are 1 outside FR-HARQ.
    """

    seed: int
    M: int
    actions: np.ndarray
    feedback: np.ndarray
    aoi: np.ndarray
    tx: np.ndarray
    slots: np.ndarray
    states: np.ndarray = None       # (T, 3, M) pre-decision states, optional
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.actions)

    @property
    def J(self):
        return float(self.aoi.sum() / self.slots.sum())

    @property
    def C(self):
        return float(self.tx.sum() / self.slots.sum())

    def window(self, start, stop=None):
        """(J, C) over decision epochs [start, stop)."""
        sl = slice(start, stop)
        n = self.slots[sl].sum()
        return float(self.aoi[sl].sum() / n), float(self.tx[sl].sum() / n)

    def records(self):
        """Yield (SystemState, Action, Feedback, CostSample) per epoch."""
        if self.states is None:
            raise ValueError("trace was recorded without states")
        for k in range(len(self)):
            s = self.states[k]
            a = Action.from_index(int(self.actions[k]), self.M)
            fb = Feedback(_FEEDBACK[int(self.feedback[k])], None if a.is_idle else a.user)
            yield SystemState(s[0], s[1], s[2]), a, fb, CostSample(float(self.aoi[k]), int(self.actions[k] != 0))


class Env:
    """Mutable simulation context owning its channel stream.

    State is held as three python lists (rx, tx, r) indexed by user.
    """

    def __init__(self, config: ModelConfig, protocol, rng):
        config.validate_protocol(protocol)
        self.config = config
        self.protocol = protocol
        self.rng = rng
        self.M, self.N, self.r_max = config.M, config.N, config.r_max
        self.A = n_actions(protocol)
        self.fr = isinstance(protocol, FrHarq)
        self.harq = isinstance(protocol, GeneralHarq)
        self.w = list(config.weights)
        self._table = [list(row) for row in protocol.error_table()]
        self.reset()

    def reset(self):
        s0 = self.config.initial_state
        self.rx, self.tx, self.r = list(s0.rx), list(s0.tx), list(s0.retx)
        self.t = 0
        self.slot = 0

    def set_errors(self, table):
        """Replace the true error table (used by tests and oracles only)."""
        self._table = [list(row) for row in table]

    @property
    def state(self):
        return SystemState(self.rx, self.tx, self.r)

    def aoi_cost(self):
        return sum(wi * a for wi, a in zip(self.w, self.rx))

    def valid_mask(self):
        m = np.zeros(self.A, dtype=bool)
        m[: self.M + 1] = True
        if self.harq:
            m[self.M + 1:] = np.asarray(self.r) >= 1
        return m

    def is_valid(self, a):
        if 0 <= a <= self.M:
            return True
        return self.harq and a <= 2 * self.M and self.r[a - self.M - 1] >= 1

    def target(self, a):
        """(user index 0-based or None, kind) of an action index."""
        if a == 0:
            return None, IDLE
        if a <= self.M:
            return a - 1, NEW
        return a - self.M - 1, RETX

    def error_prob(self, a):
        j, kind = self.target(a)
        if j is None:
            return 0.0
        if self.fr:
            return self._table[j][0]
        return self._table[j][self.r[j] if kind == RETX else 0]

    def step_index(self, a):
        """Advance one decision epoch. Returns (ack, aoi, tx_charge, slots).

        ack is None for Idle, otherwise True/False.
        """
        if not self.is_valid(a):
            raise ActionMasked(f"action {Action.from_index(a, self.M)} is not valid in {self.state}")
        j, kind = self.target(a)
        N = self.N
        if self.fr:
            return self._fr_step(j)
        if j is not None:
            success = self.rng.random() >= self.error_prob(a)
        else:
            self.rng.random()
            success = None
        aoi = self.aoi_cost()
        rx, tx, r, R = self.rx, self.tx, self.r, self.r_max
        for i in range(self.M):
            if i == j:
                rx[i], tx[i], r[i] = local_next(rx[i], tx[i], r[i], kind, success, N, R)
            else:
                rx[i], tx[i], r[i] = local_next(rx[i], tx[i], r[i], IDLE, False, N, R)
        self.t += 1
        self.slot += 1
        return success, aoi, (0 if j is None else 1), 1

    def _fr_step(self, j):
        p = self.protocol
        N, n_s = self.N, p.n_s
        rx, tx = self.rx, self.tx
        if j is None:
            self.rng.random()
            aoi = self.aoi_cost()
            for i in range(self.M):
                rx[i] = fr_local_next(rx[i], None, False, N, n_s)
                tx[i] = min(tx[i] + 1, N)
            self.t += 1
            self.slot += 1
            return None, aoi, 0, 1
        if p.p_symbol is not None:
            u = self.rng.random(n_s)
            success = int(np.count_nonzero(u >= p.p_symbol[j])) >= p.k_s
        else:
            success = self.rng.random() >= self._table[j][0]
        aoi = sum(wi * min(a + k, N) for k in range(n_s) for wi, a in zip(self.w, rx))
        for i in range(self.M):
            rx[i] = fr_local_next(rx[i], i == j, success, N, n_s)
            tx[i] = n_s if i == j else min(tx[i] + n_s, N)
        self.t += 1
        self.slot += n_s
        return success, aoi, n_s, n_s

    def step(self, action: Action):
        """Action-object wrapper around :meth:`step_index`."""
        a = action.index(self.M)
        ack, aoi, _, _ = self.step_index(a)
        fb = Feedback(None) if ack is None else Feedback(Outcome.ACK if ack else Outcome.NACK, action.user)
        return self.state, fb, CostSample(float(aoi), 0 if a == 0 else 1)


class TraceRecorder:
    """Preallocated arrays for a run of at most `capacity` epochs."""

    def __init__(self, capacity, M, record_states=True):
        self.k = 0
        self.M = M
        self.actions = np.zeros(capacity, dtype=np.int16)
        self.feedback = np.zeros(capacity, dtype=np.int8)
        self.aoi = np.zeros(capacity)
        self.tx = np.zeros(capacity)
        self.slots = np.zeros(capacity, dtype=np.int32)
        self.states = np.zeros((capacity, 3, M), dtype=np.int16) if record_states else None

    def add(self, env, a, ack, aoi, tx, slots, pre=None):
        k = self.k
        if self.states is not None:
            self.states[k] = pre
        self.actions[k] = a
        self.feedback[k] = -1 if ack is None else int(ack)
        self.aoi[k] = aoi
        self.tx[k] = tx
        self.slots[k] = slots
        self.k += 1

    def finish(self, seed, **extras):
        k = self.k
        return RunTrace(seed, self.M, self.actions[:k].copy(), self.feedback[:k].copy(), self.aoi[:k].copy(),
                        self.tx[:k].copy(), self.slots[:k].copy(),
                        None if self.states is None else self.states[:k].copy(), dict(extras))


def simulate(config, protocol, policy, horizon, seed, record_states=True):
    """Run `policy` for `horizon` slots from the initial state.

    The policy must provide ``reset(rng)`` and ``act(env) -> action index``.
    """
    chan_rng, pol_rng = spawn_rngs(seed, 2)
    env = Env(config, protocol, chan_rng)
    policy.reset(pol_rng)
    rec = TraceRecorder(int(horizon), config.M, record_states)
    while env.slot < horizon:
        pre = (env.rx, env.tx, env.r) if record_states else None
        if pre is not None:
            pre = np.array(pre)
        a = int(policy.act(env))
        ack, aoi, tx, slots = env.step_index(a)
        rec.add(env, a, ack, aoi, tx, slots, pre)
    return rec.finish(seed)
