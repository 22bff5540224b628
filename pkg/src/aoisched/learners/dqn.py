"""Deep Q-network with experience replay and a periodically synced target net.

The environment is continuing: episodes are fixed-length training windows,
the state carries over between them, and targets always bootstrap. Costs are
minimized, so greedy actions and bootstrap actions are argmins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env.model import GeneralHarq, n_actions
from ..env.sim import Env, TraceRecorder
from ..errors import DqnNumericFailure
from ..numerics import spawn_rngs
from .mlp import MlpParams, adam_step, mlp_backward, mlp_forward


@dataclass
class DqnConfig:
    gamma: float = 0.99
    lr: float = 1e-4
    batch: int = 32
    replay: int = 2000
    eps0: float = 1.0
    eps_min: float = 0.01
    eps_decay: float = 0.9
    episode_len: int = 1000
    hidden: int = 24
    huber_d: float = 1.0
    huber_variant: str = "standard"   # or "displayed": e^2 below d
    sync_period: int = 1000
    eta: float = 0.0                  # fixed transmission price in the cost
    cost_scale: float = None          # None: 1 / sum(w * N), keeps targets O(1/(1-gamma))

    def epsilon(self, episode):
        """Exploration rate for 0-based episode e: max(eps_min, eps0 * decay^e)."""
        return max(self.eps_min, self.eps0 * self.eps_decay ** episode)


def huber(e, d=1.0, variant="standard"):
    """Elementwise Huber loss; 'displayed' uses e^2 (not e^2/2) below d."""
    a = np.abs(e)
    if variant == "standard":
        return np.where(a <= d, 0.5 * e * e, d * (a - 0.5 * d))
    if variant == "displayed":
        return np.where(a <= d, e * e, d * (a - 0.5 * d))
    raise ValueError(f"unknown Huber variant {variant!r}")


def huber_grad(e, d=1.0, variant="standard"):
    if variant == "standard":
        return np.clip(e, -d, d)
    if variant == "displayed":
        return np.where(np.abs(e) <= d, 2.0 * e, d * np.sign(e))
    raise ValueError(f"unknown Huber variant {variant!r}")


def encode(env):
    """Network input: rx/N per user, plus tx/N and r/r_max under general HARQ."""
    N = float(env.N)
    if env.harq:
        rr = np.asarray(env.r, dtype=float) / env.r_max if env.r_max > 0 else np.zeros(env.M)
        return np.concatenate((np.asarray(env.rx) / N, np.asarray(env.tx) / N, rr))
    return np.asarray(env.rx, dtype=float) / N


def encoding_width(config, protocol):
    return 3 * config.M if isinstance(protocol, GeneralHarq) else config.M


class ReplayBuffer:
    """Fixed-capacity FIFO of (s, a, cost, s', valid(s')) records."""

    def __init__(self, capacity, width, n_act):
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, width))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.c = np.zeros(capacity)
        self.s2 = np.zeros((capacity, width))
        self.valid2 = np.zeros((capacity, n_act), dtype=bool)
        self.size = 0
        self.head = 0

    def __len__(self):
        return self.size

    def add(self, s, a, c, s2, valid2):
        i = self.head
        self.s[i], self.a[i], self.c[i], self.s2[i], self.valid2[i] = s, a, c, s2, valid2
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n, rng):
        idx = rng.integers(0, self.size, size=n)
        return self.s[idx], self.a[idx], self.c[idx], self.s2[idx], self.valid2[idx]


@dataclass
class DqnState:
    online: MlpParams
    target: MlpParams
    replay: ReplayBuffer
    epsilon: float = 1.0
    steps: int = 0
    syncs: list = field(default_factory=list)


def _masked_argmin(q, valid):
    return np.argmin(np.where(valid, q, np.inf), axis=-1)


def train_step(st, cfg, rng):
    """One minibatch update of the online net; returns the mean loss."""
    s, a, c, s2, valid2 = st.replay.sample(cfg.batch, rng)
    a2 = _masked_argmin(mlp_forward(st.online, s2), valid2)
    q_next = mlp_forward(st.target, s2)[np.arange(len(a2)), a2]
    y = c + cfg.gamma * q_next
    q = mlp_forward(st.online, s)
    e = q[np.arange(len(a)), a] - y
    loss = float(np.mean(huber(e, cfg.huber_d, cfg.huber_variant)))
    if not np.isfinite(loss):
        raise DqnNumericFailure("non-finite DQN loss",
                                {"step": st.steps, "loss": loss, "max_abs_q": float(np.max(np.abs(q)))})
    g = np.zeros_like(q)
    g[np.arange(len(a)), a] = huber_grad(e, cfg.huber_d, cfg.huber_variant) / len(a)
    adam_step(st.online, mlp_backward(st.online, s, g), cfg.lr)
    if not st.online.is_finite():
        raise DqnNumericFailure("non-finite DQN parameters after update", {"step": st.steps, "loss": loss})
    return loss


@dataclass
class DqnResult:
    params: MlpParams
    traces: list                 # one RunTrace per episode
    episode_J: np.ndarray
    episode_C: np.ndarray
    episode_eps: np.ndarray
    episode_loss: np.ndarray
    state: DqnState = None


def dqn_train(config, protocol, dqn_config=None, episodes=300, seed=0, record_states=False):
    """Train online for `episodes` windows of `episode_len` decision epochs."""
    cfg = dqn_config or DqnConfig()
    chan_rng, pol_rng = spawn_rngs(seed, 2)
    env = Env(config, protocol, chan_rng)
    A = n_actions(protocol)
    width = encoding_width(config, protocol)
    online = MlpParams.init(width, cfg.hidden, A, pol_rng)
    st = DqnState(online, online.copy(), ReplayBuffer(cfg.replay, width, A))
    scale = cfg.cost_scale if cfg.cost_scale is not None else 1.0 / (sum(config.weights) * config.N)
    traces, Js, Cs, epss, losses = [], [], [], [], []
    s = encode(env)
    for ep in range(episodes):
        st.epsilon = cfg.epsilon(ep)
        rec = TraceRecorder(cfg.episode_len, config.M, record_states)
        ep_loss, n_loss = 0.0, 0
        for _ in range(cfg.episode_len):
            valid = env.valid_mask()
            if pol_rng.random() < st.epsilon:
                a = int(pol_rng.choice(np.flatnonzero(valid)))
            else:
                a = int(_masked_argmin(mlp_forward(st.online, s), valid))
            pre = np.array((env.rx, env.tx, env.r)) if record_states else None
            ack, aoi, tx, slots = env.step_index(a)
            rec.add(env, a, ack, aoi, tx, slots, pre)
            s2 = encode(env)
            st.replay.add(s, a, scale * (aoi + cfg.eta * tx), s2, env.valid_mask())
            s = s2
            st.steps += 1
            if len(st.replay) >= cfg.batch:
                ep_loss += train_step(st, cfg, pol_rng)
                n_loss += 1
            if st.steps % cfg.sync_period == 0:
                st.target.load_from(st.online)
                st.syncs.append(st.steps)
        tr = rec.finish(seed, episode=ep, epsilon=st.epsilon)
        traces.append(tr)
        Js.append(tr.J)
        Cs.append(tr.C)
        epss.append(st.epsilon)
        losses.append(ep_loss / max(n_loss, 1))
    return DqnResult(st.online, traces, np.array(Js), np.array(Cs), np.array(epss), np.array(losses), st)


class DqnGreedyPolicy:
    """Acts greedily (lowest predicted cost) with a trained network."""

    name = "dqn"

    def __init__(self, params):
        self.params = params

    def reset(self, rng=None):
        pass

    def act(self, env):
        return int(_masked_argmin(mlp_forward(self.params, encode(env)), env.valid_mask()))
