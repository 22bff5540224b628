"""Average-cost SARSA with linear function approximation and Boltzmann exploration.

Q_theta(s, a) = theta_a . f(s), where f(s) = (1, w*rx/N, tx/N, r/r_max) per
user; theta is stored as an (|A|, 3M+1) array, i.e. one block per action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env.model import n_actions
from ..env.sim import Env, TraceRecorder
from ..errors import LfaDiverged
from ..numerics import spawn_rngs


def state_features(rx, tx, r, config):
    """Per-state feature vector of length 3M+1 (ages over N, retx over r_max)."""
    N = float(config.N)
    w = np.asarray(config.weights)
    rr = np.asarray(r, dtype=float) / config.r_max if config.r_max > 0 else np.zeros(config.M)
    return np.concatenate(([1.0], w * np.asarray(rx) / N, np.asarray(tx) / N, rr))


def features(state, action, config, protocol=None):
    """Block one-hot feature vector phi(s, a) of length (3M+1)(2M+1)."""
    M = config.M
    d = 3 * M + 1
    phi = np.zeros(d * (2 * M + 1))
    a = action if isinstance(action, (int, np.integer)) else action.index(M)
    phi[a * d:(a + 1) * d] = state_features(state.rx, state.tx, state.retx, config)
    return phi


def boltzmann_probs(prefs, valid, temperature=1.0):
    """softmax(-prefs / temperature) over the valid actions."""
    z = np.where(valid, -np.asarray(prefs, dtype=float) / temperature, -np.inf)
    z -= z[valid].max()
    e = np.exp(z)
    return e / e.sum()


def boltzmann_sample(theta, state, valid, rng, config, temperature=1.0):
    """Sample an action index; theta may be flat or shaped (|A|, 3M+1)."""
    M = config.M
    th = np.asarray(theta).reshape(-1, 3 * M + 1)
    f = state_features(state.rx, state.tx, state.retx, config)
    p = boltzmann_probs(th @ f, valid, temperature)
    return _draw(p, rng)


def _draw(p, rng):
    u = rng.random()
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, u * c[-1], side="right"), len(p) - 1))


@dataclass
class SarsaSchedules:
    """Step sizes a/(1 + t/tau) and an annealed exploration temperature."""

    alpha0: float = 0.05
    alpha_tau: float = 1e4
    beta0: float = 0.01
    beta_tau: float = 1e4
    gamma0: float = 1.0
    gamma_tau: float = 1e3
    temp0: float = 1.0
    temp_tau: float = 1e3
    temp_min: float = 0.05

    def alpha(self, t):
        return self.alpha0 / (1.0 + t / self.alpha_tau)

    def beta(self, t):
        return self.beta0 / (1.0 + t / self.beta_tau)

    def gamma(self, t):
        return self.gamma0 / (1.0 + t / self.gamma_tau)

    def temperature(self, t):
        return max(self.temp_min, self.temp0 / (1.0 + t / self.temp_tau))


@dataclass
class SarsaLfaState:
    theta: np.ndarray          # (|A|, 3M+1)
    J: float = 0.0
    eta: float = 0.0
    tx_count: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.theta.size


def sarsa_lfa_run(config, protocol, lam=None, eta_init=0.0, schedules=None, horizon=10_000, seed=0,
                  theta_bound=1e6, record_states=False, return_state=False):
    """Run the learner online for `horizon` slots; returns the RunTrace."""
    lam = config.lam if lam is None else float(lam)
    sch = schedules or SarsaSchedules()
    M = config.M
    A = n_actions(protocol)
    chan_rng, pol_rng = spawn_rngs(seed, 2)
    env = Env(config, protocol, chan_rng)
    st = SarsaLfaState(np.zeros((A, 3 * M + 1)), 0.0, float(eta_init))
    rec = TraceRecorder(int(horizon), M, record_states)
    etas = np.zeros(int(horizon))

    f = state_features(env.rx, env.tx, env.r, config)
    a = _draw(boltzmann_probs(st.theta @ f, env.valid_mask(), sch.temperature(0)), pol_rng)
    t = 0
    while env.slot < horizon:
        pre = np.array((env.rx, env.tx, env.r)) if record_states else None
        ack, aoi, tx, slots = env.step_index(a)
        rec.add(env, a, ack, aoi, tx, slots, pre)
        etas[t] = st.eta
        t += 1
        st.tx_count += tx
        cost = aoi + st.eta * tx
        f2 = state_features(env.rx, env.tx, env.r, config)
        a2 = _draw(boltzmann_probs(st.theta @ f2, env.valid_mask(), sch.temperature(t)), pol_rng)
        td = cost - st.J * slots + st.theta[a2] @ f2 - st.theta[a] @ f
        st.theta[a] += sch.alpha(t) * td * f
        st.J += sch.beta(t) * (cost / slots - st.J)
        st.eta = max(0.0, st.eta + sch.gamma(t) * (st.tx_count / env.slot - lam))
        if not np.all(np.isfinite(st.theta)) or np.max(np.abs(st.theta)) > theta_bound:
            trace = rec.finish(seed, eta=etas[:t])
            raise LfaDiverged(f"|theta| exceeded {theta_bound} at step {t}", trace)
        f, a = f2, a2
    tr = rec.finish(seed, eta=etas[:t], theta=st.theta.copy(), gain=st.J)
    return (tr, st) if return_state else tr
