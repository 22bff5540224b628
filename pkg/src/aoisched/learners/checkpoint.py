"""Versioned learner checkpoints stored as numpy .npz archives."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .dqn import DqnState, ReplayBuffer
from .mlp import PARAM_NAMES, MlpParams
from .sarsa_lfa import SarsaLfaState
from .ucrl2 import UcrlState

CHECKPOINT_VERSION = 1


def _mlp_arrays(prefix, p):
    out = {f"{prefix}.{k}": getattr(p, k) for k in PARAM_NAMES}
    # Adam moments exist only after the first update
    out.update({f"{prefix}.m.{k}": v for k, v in p.m.items()})
    out.update({f"{prefix}.v.{k}": v for k, v in p.v.items()})
    out[f"{prefix}.t"] = np.array(p.t)
    return out


def _mlp_from(z, prefix):
    p = MlpParams(*(z[f"{prefix}.{k}"].copy() for k in PARAM_NAMES))
    p.m = {k: z[f"{prefix}.m.{k}"].copy() for k in PARAM_NAMES if f"{prefix}.m.{k}" in z}
    p.v = {k: z[f"{prefix}.v.{k}"].copy() for k in PARAM_NAMES if f"{prefix}.v.{k}" in z}
    p.t = int(z[f"{prefix}.t"])
    return p


def _arrays(state):
    if isinstance(state, SarsaLfaState):
        return "sarsa-lfa", {"theta": state.theta, "J": np.array(state.J), "eta": np.array(state.eta),
                             "tx_count": np.array(state.tx_count)}
    if isinstance(state, UcrlState):
        return "ucrl2", {"counts": state.counts, "fails": state.fails, "visits": state.visits,
                         "meta": np.array([state.n_states, state.n_actions, state.episode, state.t_k]),
                         "hyper": np.array([state.rho, state.U, state.alpha]), "eta": np.array(state.eta),
                         "tx_total": np.array(state.tx_total)}
    if isinstance(state, DqnState):
        rb = state.replay
        out = {"replay.s": rb.s, "replay.a": rb.a, "replay.c": rb.c, "replay.s2": rb.s2, "replay.valid2": rb.valid2,
               "replay.meta": np.array([rb.capacity, rb.size, rb.head]), "epsilon": np.array(state.epsilon),
               "steps": np.array(state.steps), "syncs": np.array(state.syncs, dtype=np.int64)}
        out.update(_mlp_arrays("online", state.online))
        out.update(_mlp_arrays("target", state.target))
        return "dqn", out
    raise TypeError(f"cannot checkpoint {type(state).__name__}")


def save_checkpoint(path, state):
    """Write a learner state atomically; returns the path."""
    kind, arrays = _arrays(state)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".npz")
    with os.fdopen(fd, "wb") as fh:
        np.savez(fh, format_version=np.array(CHECKPOINT_VERSION), kind=np.array(kind), **arrays)
    os.replace(tmp, path)
    return path


def load_checkpoint(path):
    """Read a checkpoint back into the matching learner state object."""
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint version {version} not supported (expected {CHECKPOINT_VERSION})")
        kind = str(z["kind"])
        if kind == "sarsa-lfa":
            return SarsaLfaState(z["theta"].copy(), float(z["J"]), float(z["eta"]), float(z["tx_count"]))
        if kind == "ucrl2":
            n_s, n_a, ep, t_k = (int(x) for x in z["meta"])
            rho, U, alpha = (float(x) for x in z["hyper"])
            return UcrlState(z["counts"].copy(), z["fails"].copy(), z["visits"].copy(), n_s, n_a, rho, U, alpha,
                             float(z["eta"]), ep, t_k, float(z["tx_total"]))
        if kind == "dqn":
            cap, size, head = (int(x) for x in z["replay.meta"])
            rb = ReplayBuffer(cap, z["replay.s"].shape[1], z["replay.valid2"].shape[1])
            rb.s, rb.a, rb.c = z["replay.s"].copy(), z["replay.a"].copy(), z["replay.c"].copy()
            rb.s2, rb.valid2 = z["replay.s2"].copy(), z["replay.valid2"].copy()
            rb.size, rb.head = size, head
            return DqnState(_mlp_from(z, "online"), _mlp_from(z, "target"), rb, float(z["epsilon"]),
                            int(z["steps"]), [int(x) for x in z["syncs"]])
    raise ValueError(f"unknown checkpoint kind {kind!r}")
