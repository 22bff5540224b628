"""Relative value iteration and policy iteration for the Lagrangian MDP.

The per-epoch cost is the AoI accrued plus eta times the transmission charge.
FR-HARQ epochs last tau slots; both solvers work on the standard
semi-Markov transform, so the returned gain is per slot:

    Q(s, a) = h(s) + (c(s, a) + eta * d(s, a) + E[h(s')] - h(s)) / tau(s, a)

RVI additionally applies the aperiodicity transform h <- (1 - omega) h + omega T h,
which leaves the fixed point unchanged and keeps periodic chains (error-free
channels) from oscillating.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ..env.tabular import TabularModel, build_tabular
from ..errors import RviDiverged
from .policies import DeterministicPolicy, ValueTables


def _as_model(model_or_config, protocol=None, **kw):
    if isinstance(model_or_config, TabularModel):
        return model_or_config
    return build_tabular(model_or_config, protocol, **kw)


def q_values(model: TabularModel, h, eta):
    """Q(s, a) for all pairs; invalid pairs are +inf."""
    eh = (1.0 - model.p_fail) * h[model.succ_ok] + model.p_fail * h[model.succ_fail]
    cost = model.stage_cost + eta * model.tx_slots
    if model.semi_markov:
        q = h[:, None] + (cost + eh - h[:, None]) / model.tau
    else:
        q = cost + eh
    return np.where(model.valid, q, np.inf)


def greedy_actions(Q, tie_tol=1e-9):
    """Lowest action index among the near-minimizers of each row."""
    qmin = Q.min(axis=1, keepdims=True)
    near = Q <= qmin + tie_tol * np.maximum(1.0, np.abs(qmin))
    return np.argmax(near, axis=1)


def rvi_solve(model_or_config, protocol=None, eta=0.0, epsilon=1e-9, ref_state=None, max_iter=100_000,
              h0=None, omega=0.5, tie_tol=1e-9, strict=True):
    """Solve min_pi (AoI + eta * transmissions) by relative value iteration.

    Returns (DeterministicPolicy, ValueTables). Stops when the undamped
    sup-norm change of h falls below `epsilon`. After `max_iter` sweeps it
    raises RviDiverged, or with strict=False returns the greedy policy of the
    last iterate (learners use this as an anytime planner).
    The reference state defaults to the initial state.
    """
    if eta < 0:
        raise ValueError("eta must be non-negative")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < omega <= 1.0:
        raise ValueError("omega must be in (0, 1]")
    model = _as_model(model_or_config, protocol)
    ref = model.space.initial_index if ref_state is None else int(ref_state)
    h = np.zeros(model.n_states) if h0 is None else np.array(h0, dtype=float)
    h -= h[ref]
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        th = q_values(model, h, eta).min(axis=1)
        h_new = (1.0 - omega) * h + omega * th
        h_new -= h_new[ref]
        residual = float(np.max(np.abs(h_new - h))) / omega
        h = h_new
        if not np.isfinite(residual):
            break
        if residual <= epsilon:
            break
    else:
        if strict:
            raise RviDiverged(f"RVI did not converge in {max_iter} sweeps (residual {residual:.3e})", residual)
    if not np.isfinite(residual):
        raise RviDiverged("RVI produced non-finite values", residual)
    Q = q_values(model, h, eta)
    gain = float(Q[ref].min() - h[ref])
    policy = DeterministicPolicy(model.space, greedy_actions(Q, tie_tol), eta)
    return policy, ValueTables(h, Q, float(eta), gain, ref, residual, it)


def bellman_residual(model, tables):
    """max_s |min_a Q(s, a) - h(s) - gain| for the stored tables."""
    Q = q_values(model, tables.h, tables.eta)
    return float(np.max(np.abs(Q.min(axis=1) - tables.h - tables.avg_cost)))


def evaluate_differential(model, actions, eta, ref):
    """Gain and bias of a deterministic policy (h(ref) = 0).

    Solves g * tau(s) + h(s) - sum_s' P(s'|s) h(s') = c(s) over all states;
    requires the policy to be unichain on the whole space.
    """
    S = model.n_states
    idx = np.arange(S)
    p = model.p_fail[idx, actions]
    ok, fail = model.succ_ok[idx, actions], model.succ_fail[idx, actions]
    cost = model.stage_cost[idx, actions] + eta * model.tx_slots[idx, actions]
    tau = model.tau[idx, actions]
    P = sparse.csr_matrix((np.concatenate([1 - p, p]), (np.concatenate([idx, idx]), np.concatenate([ok, fail]))),
                          shape=(S, S))
    A = (sparse.identity(S, format="csr") - P).tolil()
    # the column of h(ref) is replaced by the unknown gain
    A[:, ref] = tau.reshape(-1, 1)
    x = spsolve(A.tocsc(), cost)
    g = float(x[ref])
    h = x.copy()
    h[ref] = 0.0
    return g, h


def policy_iteration(model_or_config, protocol=None, eta=0.0, ref_state=None, actions0=None, max_iter=1000,
                     tie_tol=1e-9):
    """Howard policy iteration for unichain models; exact counterpart of RVI.

    Improvement keeps the incumbent action on ties so the iteration cannot cycle.
    """
    model = _as_model(model_or_config, protocol)
    ref = model.space.initial_index if ref_state is None else int(ref_state)
    acts = np.zeros(model.n_states, dtype=np.int64) if actions0 is None else np.array(actions0, dtype=np.int64)
    idx = np.arange(model.n_states)
    for it in range(1, max_iter + 1):
        g, h = evaluate_differential(model, acts, eta, ref)
        Q = q_values(model, h, eta)
        qmin = Q.min(axis=1)
        keep = Q[idx, acts] <= qmin + tie_tol * np.maximum(1.0, np.abs(qmin))
        new = np.where(keep, acts, greedy_actions(Q, tie_tol))
        if np.array_equal(new, acts):
            break
        acts = new
    else:
        raise RviDiverged(f"policy iteration did not stabilise in {max_iter} rounds", np.nan)
    Q = q_values(model, h, eta)
    policy = DeterministicPolicy(model.space, greedy_actions(Q, tie_tol), eta)
    res = float(np.max(np.abs(Q.min(axis=1) - h - g)))
    return policy, ValueTables(h, Q, float(eta), g, ref, res, it)
