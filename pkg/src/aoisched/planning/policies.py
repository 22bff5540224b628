"""Tabular policies produced by the exact solvers, plus their text format.

Every policy offers ``reset(rng)`` and ``act(env) -> action index`` for the
simulator, and ``action_weights(space)`` for exact evaluation: a list of
(action array, probability array) pairs over the state space.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ..env.model import Action, model_fingerprint, protocol_dict

TEXT_MAGIC = "# aoisched-policy v1"


class DeterministicPolicy:
    """One action index per state of `space`."""

    name = "deterministic"

    def __init__(self, space, actions, eta=None):
        self.space = space
        self.actions = np.asarray(actions, dtype=np.int64)
        if self.actions.shape != (space.size,):
            raise ValueError(f"need {space.size} actions, got shape {self.actions.shape}")
        self.eta = eta

    def reset(self, rng=None):
        pass

    def state_index(self, env):
        return self.space.index_arrays(np.asarray(env.rx), np.asarray(env.tx), np.asarray(env.r))

    def act(self, env):
        return int(self.actions[self.state_index(env)])

    def decide(self, state):
        return Action.from_index(int(self.actions[self.space.index(state)]), self.space.config.M)

    def action_weights(self, space=None):
        return [(self.actions, np.ones(self.space.size))]

    def differs_from(self, other):
        return np.flatnonzero(self.actions != other.actions)

    def with_action(self, s, a):
        acts = self.actions.copy()
        acts[s] = a
        return DeterministicPolicy(self.space, acts, self.eta)

    def check_valid(self, model):
        ok = model.valid[np.arange(len(self.actions)), self.actions]
        if not ok.all():
            bad = int(np.flatnonzero(~ok)[0])
            raise ValueError(f"action {self.actions[bad]} is invalid in state {self.space.state(bad)}")

    def __eq__(self, other):
        return isinstance(other, DeterministicPolicy) and np.array_equal(self.actions, other.actions)

    def to_text(self, protocol):
        return policy_to_text(self, protocol)


class MixturePolicy:
    """Base policy everywhere except `state`, where it plays the base action
    with probability `mu` and `alt_action` otherwise."""

    name = "mixture"

    def __init__(self, base: DeterministicPolicy, state, alt_action, mu):
        if not 0.0 <= mu <= 1.0:
            raise ValueError(f"mixing probability must be in [0, 1], got {mu}")
        self.base = base
        self.space = base.space
        self.state = int(state)
        self.alt_action = int(alt_action)
        self.mu = float(mu)
        self.rng = None

    @property
    def alternative(self):
        return self.base.with_action(self.state, self.alt_action)

    def reset(self, rng=None):
        self.rng = rng

    def act(self, env):
        s = self.base.state_index(env)
        if s != self.state:
            return int(self.base.actions[s])
        return int(self.base.actions[s]) if self.rng.random() < self.mu else self.alt_action

    def action_weights(self, space=None):
        w_base = np.ones(self.space.size)
        w_base[self.state] = self.mu
        w_alt = np.zeros(self.space.size)
        w_alt[self.state] = 1.0 - self.mu
        return [(self.base.actions, w_base), (self.alternative.actions, w_alt)]

    def to_text(self, protocol):
        return policy_to_text(self, protocol)


class TimeSharingPolicy:
    """Picks one of two deterministic policies once per run: the first with
    probability `mu`. Its long-run cost is the mu-weighted average."""

    name = "time-sharing"

    def __init__(self, first, second, mu):
        if not 0.0 <= mu <= 1.0:
            raise ValueError(f"mixing probability must be in [0, 1], got {mu}")
        self.first, self.second, self.mu = first, second, float(mu)
        self.space = first.space
        self.current = first

    def reset(self, rng=None):
        self.current = self.first if rng is None or rng.random() < self.mu else self.second

    def act(self, env):
        return self.current.act(env)


@dataclass
class ValueTables:
    h: np.ndarray
    Q: np.ndarray
    eta: float
    avg_cost: float
    ref_state: int
    residual: float = 0.0
    iterations: int = 0

    def to_csv(self, path=None, M=None):
        A = self.Q.shape[1]
        M = M if M is not None else (A - 1)
        names = [str(Action.from_index(a, M)) for a in range(A)]
        buf = io.StringIO()
        buf.write("state,h," + ",".join(f"Q_{n}" for n in names) + "\n")
        for s in range(len(self.h)):
            q = ",".join("" if not np.isfinite(v) else repr(float(v)) for v in self.Q[s])
            buf.write(f"{s},{float(self.h[s])!r},{q}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def policy_to_text(policy, protocol):
    """Header (fingerprint, protocol, eta), then `state_index action` lines."""
    base = policy.base if isinstance(policy, MixturePolicy) else policy
    space = base.space
    cfg = space.config
    lines = [TEXT_MAGIC,
             f"config_hash: {model_fingerprint(cfg, protocol)}",
             f"protocol: {protocol_dict(protocol)['variant']}",
             f"eta: {'' if base.eta is None else repr(float(base.eta))}",
             f"states: {space.size}"]
    if isinstance(policy, MixturePolicy):
        lines.append(f"override: {policy.state} {Action.from_index(policy.alt_action, cfg.M)} {policy.mu!r}")
    for s, a in enumerate(base.actions):
        lines.append(f"{s} {Action.from_index(int(a), cfg.M)}")
    return "\n".join(lines) + "\n"


def policy_from_text(text, space, protocol=None):
    lines = text.strip().splitlines()
    if not lines or lines[0] != TEXT_MAGIC:
        raise ValueError("not a policy file")
    header, body = {}, []
    for line in lines[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            header[k.strip()] = v.strip()
        else:
            body.append(line)
    if protocol is not None and header.get("config_hash") != model_fingerprint(space.config, protocol):
        raise ValueError("policy was computed for a different model")
    M = space.config.M
    actions = np.zeros(space.size, dtype=np.int64)
    for line in body:
        s, a = line.split()
        actions[int(s)] = Action.parse(a).index(M)
    eta = float(header["eta"]) if header.get("eta") else None
    pol = DeterministicPolicy(space, actions, eta)
    if "override" in header:
        s, a, mu = header["override"].split()
        return MixturePolicy(pol, int(s), Action.parse(a).index(M), float(mu))
    return pol
