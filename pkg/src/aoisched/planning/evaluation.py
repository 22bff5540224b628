"""Exact (stationary distribution) and Monte-Carlo policy evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from ..env.model import FrHarq
from ..env.sim import simulate
from ..env.tabular import TabularModel, build_tabular
from ..errors import NotUnichain
from ..numerics import mean_ci, spawn_rngs
from .policies import DeterministicPolicy, TimeSharingPolicy

STATIONARY_TOL = 1e-10


@dataclass
class EvaluationResult:
    J: float
    C: float
    method: str                          # "exact" or "monte-carlo"
    stationary: Optional[np.ndarray] = None
    ci_J: float = 0.0
    ci_C: float = 0.0
    seeds: list = field(default_factory=list)
    per_seed_J: Optional[np.ndarray] = None
    per_seed_C: Optional[np.ndarray] = None
    residual: float = 0.0


def _model(model_or_config, protocol):
    if isinstance(model_or_config, TabularModel):
        return model_or_config
    return build_tabular(model_or_config, protocol)


def _chain(model, policy):
    """Transition matrix and per-state epoch cost, duration and charge.

    Periodic policies (round robin) are evaluated on the product chain of
    (phase, state); phase k maps to block k of the returned arrays.
    """
    S = model.n_states
    idx = np.arange(S)
    if hasattr(policy, "phase_tables"):
        tables = policy.phase_tables(model.space)
        K = len(tables)
    else:
        tables = [policy.action_weights(model.space)]
        K = 1
    rows, cols, vals = [], [], []
    cost = np.zeros(K * S)
    tau = np.zeros(K * S)
    tx = np.zeros(K * S)
    for k, pairs in enumerate(tables):
        off, nxt = k * S, ((k + 1) % K) * S
        for acts, wts in pairs:
            acts = np.asarray(acts)
            if not model.valid[idx, acts][wts > 0].all():
                raise ValueError("policy selects an invalid action")
            p = model.p_fail[idx, acts]
            rows += [off + idx, off + idx]
            cols += [nxt + model.succ_ok[idx, acts], nxt + model.succ_fail[idx, acts]]
            vals += [wts * (1 - p), wts * p]
            cost[off:off + S] += wts * model.stage_cost[idx, acts]
            tau[off:off + S] += wts * model.tau[idx, acts]
            tx[off:off + S] += wts * model.tx_slots[idx, acts]
    P = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(K * S, K * S))
    P.eliminate_zeros()
    return P, cost, tau, tx


def stationary_distribution(P, start):
    """Stationary law of the closed class reachable from `start`.

    Raises NotUnichain if more than one closed class is reachable.
    """
    n = P.shape[0]
    reach = csgraph.breadth_first_order(P, start, directed=True, return_predecessors=False)
    reach = np.sort(reach)
    sub = P[reach][:, reach]
    ncomp, labels = csgraph.connected_components(sub, directed=True, connection="strong")
    # a class is closed if no edge leaves it
    coo = sub.tocoo()
    leaving = np.zeros(ncomp, dtype=bool)
    cross = labels[coo.row] != labels[coo.col]
    leaving[labels[coo.row[cross]]] = True
    closed = np.flatnonzero(~leaving)
    if len(closed) != 1:
        classes = [reach[labels == c].tolist() for c in closed]
        raise NotUnichain(f"policy has {len(closed)} recurrent classes reachable from the initial state", classes)
    members = reach[labels == closed[0]]
    Pc = P[members][:, members]
    m = len(members)
    A = (Pc.T - sparse.identity(m, format="csr")).tolil()
    A[m - 1, :] = np.ones(m)
    b = np.zeros(m)
    b[m - 1] = 1.0
    pi = spsolve(A.tocsc(), b) if m > 1 else np.ones(1)
    pi = np.atleast_1d(pi)
    resid = float(np.max(np.abs(Pc.T @ pi - pi))) if m > 1 else 0.0
    if resid > STATIONARY_TOL:
        # one step of iterative refinement
        r = b - A.tocsc() @ pi
        pi = pi + spsolve(A.tocsc(), r)
        resid = float(np.max(np.abs(Pc.T @ pi - pi)))
    full = np.zeros(n)
    full[members] = pi
    return full, resid


def evaluate_policy_exact(policy, model_or_config, protocol=None):
    """Long-run (J, C) from the stationary distribution of the induced chain.

    For FR-HARQ both are per slot (renewal-reward over decision epochs).
    """
    model = _model(model_or_config, protocol)
    if isinstance(policy, TimeSharingPolicy):
        a = evaluate_policy_exact(policy.first, model)
        b = evaluate_policy_exact(policy.second, model)
        mu = policy.mu
        return EvaluationResult(mu * a.J + (1 - mu) * b.J, mu * a.C + (1 - mu) * b.C, "exact",
                                residual=max(a.residual, b.residual))
    if not hasattr(policy, "action_weights") and not hasattr(policy, "phase_tables"):
        policy = policy.tabulate(model.space)
    P, cost, tau, tx = _chain(model, policy)
    rho, resid = stationary_distribution(P, model.space.initial_index)
    if resid > STATIONARY_TOL:
        raise ArithmeticError(f"stationary solve residual {resid:.2e} above {STATIONARY_TOL}")
    slots = float(rho @ tau)
    return EvaluationResult(float(rho @ cost) / slots, float(rho @ tx) / slots, "exact", rho, residual=resid)


def _batch_deterministic(policy, model, horizon, seeds, chunk=4096):
    """Vectorized rollouts of a deterministic tabular policy, one stream per seed.

    Uses the same channel stream layout as `simulate`, so results match it exactly.
    """
    rngs = [spawn_rngs(s, 2)[0] for s in seeds]
    n = len(seeds)
    s = np.full(n, model.space.initial_index, dtype=np.int64)
    acts = policy.actions
    aoi = np.zeros(n)
    tx = np.zeros(n)
    t = 0
    while t < horizon:
        m = min(chunk, horizon - t)
        U = np.stack([r.random(m) for r in rngs])
        for k in range(m):
            a = acts[s]
            aoi += model.aoi[s]
            tx += model.tx_slots[s, a]
            fail = U[:, k] < model.p_fail[s, a]
            s = np.where(fail, model.succ_fail[s, a], model.succ_ok[s, a])
        t += m
    return aoi / horizon, tx / horizon


def evaluate_policy_mc(policy, config, protocol, horizon, seeds, model=None, level=0.95):
    """Mean and Student-t CI of finite-horizon (J, C) over independent seeds."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    if isinstance(policy, DeterministicPolicy) and not isinstance(protocol, FrHarq):
        model = model or build_tabular(config, protocol, space=policy.space)
        Js, Cs = _batch_deterministic(policy, model, int(horizon), seeds)
    else:
        Js, Cs = [], []
        for sd in seeds:
            tr = simulate(config, protocol, policy, horizon, sd, record_states=False)
            Js.append(tr.J)
            Cs.append(tr.C)
        Js, Cs = np.array(Js), np.array(Cs)
    mJ, hJ = mean_ci(Js, level)
    mC, hC = mean_ci(Cs, level)
    return EvaluationResult(mJ, mC, "monte-carlo", ci_J=hJ, ci_C=hC, seeds=seeds, per_seed_J=Js, per_seed_C=Cs)
