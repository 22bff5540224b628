"""Array form of the model used by every exact solver.

Each (state, action) pair has at most two successors, so the kernel is
stored as two successor arrays plus the failure probability.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kernel import IDLE, NEW, RETX, fr_local_next, local_next
from .model import FrHarq, GeneralHarq, n_actions
from .spaces import StateSpace


@dataclass(frozen=True)
class TabularModel:
    space: StateSpace
    valid: np.ndarray        # (S, A) bool
    succ_ok: np.ndarray      # (S, A) successor on success (self-successor for invalid pairs)
    succ_fail: np.ndarray    # (S, A) successor on failure
    p_fail: np.ndarray       # (S, A) failure probability, 0 for Idle
    err_key: np.ndarray      # (S, A) flat (user, r) key into the error table, -1 for Idle
    stage_cost: np.ndarray   # (S, A) AoI accrued over the decision epoch
    tau: np.ndarray          # (S, A) slots in the decision epoch
    tx_slots: np.ndarray     # (S, A) transmission charge of the epoch
    aoi: np.ndarray          # (S,) per-slot weighted AoI

    @property
    def n_states(self):
        return self.valid.shape[0]

    @property
    def n_actions(self):
        return self.valid.shape[1]

    @property
    def semi_markov(self):
        return bool(np.any(self.tau != 1))

    def with_errors(self, table):
        """Same structure with a different per-(user, r) error table."""
        flat = np.asarray([v for row in table for v in row], dtype=float)
        p = np.where(self.err_key >= 0, flat[np.maximum(self.err_key, 0)], 0.0)
        return replace(self, p_fail=np.where(self.valid, p, 0.0))


def build_tabular(config, protocol, space=None, reachable=None, fr_subsidy="per_slot"):
    """Tabulate the kernel over the joint space.

    fr_subsidy selects how a FR-HARQ pull is charged against the transmission
    budget: "per_slot" charges n_s (one per occupied slot), "per_pull" charges 1.
    """
    if space is None:
        if reachable is None:
            reachable = isinstance(protocol, GeneralHarq)
        space = StateSpace(config, protocol, reachable=reachable)
    M, N, R = config.M, config.N, config.r_max
    S, A = space.size, n_actions(protocol)
    loc = space.local_index_arrays()
    strides = space.strides
    fr = isinstance(protocol, FrHarq)
    lut = space._lut

    def local_table(u, fn):
        arr = space.local_arrays[u]
        out = np.empty(len(arr), dtype=np.int64)
        for k, (a, b, r) in enumerate(arr):
            a2, b2, r2 = fn(int(a), int(b), int(r))
            out[k] = lut[u, a2, b2, r2]
        return out

    idle_next, pass_next, ok_next, fail_next, rok_next, rfail_next = [], [], [], [], [], []
    for u in range(M):
        if fr:
            n_s = protocol.n_s
            idle_next.append(local_table(u, lambda a, b, r: (fr_local_next(a, None, False, N, n_s), 1, 0)))
            pass_next.append(local_table(u, lambda a, b, r: (fr_local_next(a, False, False, N, n_s), 1, 0)))
            ok_next.append(local_table(u, lambda a, b, r: (fr_local_next(a, True, True, N, n_s), 1, 0)))
            fail_next.append(local_table(u, lambda a, b, r: (fr_local_next(a, True, False, N, n_s), 1, 0)))
        else:
            idle_next.append(local_table(u, lambda a, b, r: local_next(a, b, r, IDLE, False, N, R)))
            ok_next.append(local_table(u, lambda a, b, r: local_next(a, b, r, NEW, True, N, R)))
            fail_next.append(local_table(u, lambda a, b, r: local_next(a, b, r, NEW, False, N, R)))
            if isinstance(protocol, GeneralHarq):
                # retx from r=0 is masked; evaluate with r>=1 to keep the table well-formed
                rok_next.append(local_table(u, lambda a, b, r: local_next(a, b, max(r, 1), RETX, True, N, R)))
                rfail_next.append(local_table(u, lambda a, b, r: local_next(a, b, max(r, 1), RETX, False, N, R)))
        if np.any(idle_next[-1] < 0) or np.any(ok_next[-1] < 0) or np.any(fail_next[-1] < 0):
            raise RuntimeError("local state space is not closed under the dynamics")

    rx, _, rr = space.components()
    w = np.asarray(config.weights)
    aoi = rx @ w
    base_idle = sum(strides[u] * idle_next[u][loc[u]] for u in range(M))
    base_pull = sum(strides[u] * pass_next[u][loc[u]] for u in range(M)) if fr else base_idle

    valid = np.zeros((S, A), dtype=bool)
    succ_ok = np.repeat(np.arange(S, dtype=np.int64)[:, None], A, axis=1)
    succ_fail = succ_ok.copy()
    err_key = np.full((S, A), -1, dtype=np.int64)
    valid[:, 0] = True
    succ_ok[:, 0] = base_idle
    succ_fail[:, 0] = base_idle
    stage_cost = np.repeat(aoi[:, None].astype(float), A, axis=1)
    tau = np.ones((S, A))
    tx_slots = np.zeros((S, A))

    if fr:
        n_s = protocol.n_s
        cum = [np.array([sum(min(a + k, N) for k in range(n_s)) for a in space.local_arrays[u][:, 0]], dtype=float)
               for u in range(M)]
        pull_cost = sum(w[u] * cum[u][loc[u]] for u in range(M))

    for j in range(M):
        a = 1 + j
        own = (base_pull if fr else base_idle) - strides[j] * (pass_next[j] if fr else idle_next[j])[loc[j]]
        valid[:, a] = True
        succ_ok[:, a] = own + strides[j] * ok_next[j][loc[j]]
        succ_fail[:, a] = own + strides[j] * fail_next[j][loc[j]]
        err_key[:, a] = j * (R + 1)
        tx_slots[:, a] = 1.0
        if fr:
            stage_cost[:, a] = pull_cost
            tau[:, a] = n_s
            tx_slots[:, a] = n_s if fr_subsidy == "per_slot" else 1.0
        if isinstance(protocol, GeneralHarq):
            b = 1 + M + j
            has = rr[:, j] >= 1
            valid[:, b] = has
            own_i = base_idle - strides[j] * idle_next[j][loc[j]]
            succ_ok[:, b] = np.where(has, own_i + strides[j] * rok_next[j][loc[j]], succ_ok[:, b])
            succ_fail[:, b] = np.where(has, own_i + strides[j] * rfail_next[j][loc[j]], succ_fail[:, b])
            err_key[:, b] = np.where(has, j * (R + 1) + rr[:, j], -1)
            tx_slots[:, b] = np.where(has, 1.0, 0.0)

    if fr_subsidy not in ("per_slot", "per_pull"):
        raise ValueError(f"unknown fr_subsidy {fr_subsidy!r}")
    model = TabularModel(space, valid, succ_ok, succ_fail, np.zeros((S, A)), err_key,
                         stage_cost, tau, tx_slots, aoi.astype(float))
    return model.with_errors(protocol.error_table())
