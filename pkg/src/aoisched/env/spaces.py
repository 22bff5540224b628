"""Enumeration of the joint state space as a product of per-user local spaces.

Joint index = sum_u stride_u * local_index_u with user 1 most significant.
ARQ and FR-HARQ collapse each user to its receiver age; general HARQ keeps
the full (rx, tx, r) triple.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from ..errors import StateSpaceTooLarge
from .kernel import IDLE, NEW, RETX, fr_local_next, local_next
from .model import FrHarq, GeneralHarq, ModelConfig, SystemState

DEFAULT_CAP = 10_000_000


def _collapsed(protocol):
    return not isinstance(protocol, GeneralHarq)


def local_raw_states(config: ModelConfig, protocol):
    N = config.N
    if _collapsed(protocol):
        return [(a, 1, 0) for a in range(1, N + 1)]
    return [(a, b, r) for a in range(1, N + 1) for b in range(1, N + 1) for r in range(config.r_max + 1)]


def local_reachable_states(config: ModelConfig, protocol, start):
    """Forward closure of one user's local dynamics from `start` under all actions."""
    N, r_max = config.N, config.r_max
    if _collapsed(protocol):
        n_s = protocol.n_s if isinstance(protocol, FrHarq) else 1
        seen = {start[0]}
        queue = deque([start[0]])
        while queue:
            a = queue.popleft()
            nxt = {fr_local_next(a, None, False, N, n_s), fr_local_next(a, False, False, N, n_s),
                   fr_local_next(a, True, True, N, n_s)}
            for b in nxt - seen:
                seen.add(b)
                queue.append(b)
        return [(a, 1, 0) for a in sorted(seen)]
    seen = {tuple(start)}
    queue = deque([tuple(start)])
    while queue:
        u = queue.popleft()
        cand = [local_next(*u, IDLE, False, N, r_max), local_next(*u, NEW, True, N, r_max),
                local_next(*u, NEW, False, N, r_max)]
        if u[2] >= 1:
            cand += [local_next(*u, RETX, True, N, r_max), local_next(*u, RETX, False, N, r_max)]
        for v in cand:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return sorted(seen)


class StateSpace:
    """Ordered joint state space with a bijective index map.

    Parameters
    ----------
    reachable : bool
        If True, each user's local space is restricted to the states its own
        dynamics can reach from the initial state. The joint space is the
        product of those sets, a superset of the joint reachable set.
    """

    def __init__(self, config: ModelConfig, protocol, reachable=False, cap=DEFAULT_CAP):
        config.validate_protocol(protocol)
        self.config = config
        self.protocol = protocol
        self.collapsed = _collapsed(protocol)
        s0 = config.initial_state
        locals_ = []
        for u in range(config.M):
            if reachable:
                loc = local_reachable_states(config, protocol, (s0.rx[u], s0.tx[u], s0.retx[u]))
            else:
                loc = local_raw_states(config, protocol)
            locals_.append(loc)
        sizes = [len(loc) for loc in locals_]
        size = 1
        for n in sizes:
            size *= n
            if size > cap:
                raise StateSpaceTooLarge(
                    f"state space exceeds cap {cap} (M={config.M}, N={config.N}, r_max={config.r_max}); "
                    "use simulation-based workflows (index policies, UCRL2-Whittle, SARSA-LFA, DQN)")
        self.size = size
        self.local_states = locals_
        self.local_sizes = sizes
        strides = [1] * config.M
        for u in range(config.M - 2, -1, -1):
            strides[u] = strides[u + 1] * sizes[u + 1]
        self.strides = np.array(strides, dtype=np.int64)
        N, R = config.N, config.r_max
        # lut[u, rx, tx, r] -> local index or -1
        self._lut = np.full((config.M, N + 1, N + 1, R + 1), -1, dtype=np.int64)
        self.local_arrays = []
        for u, loc in enumerate(locals_):
            arr = np.array(loc, dtype=np.int64).reshape(-1, 3)
            self.local_arrays.append(arr)
            if self.collapsed:
                self._lut[u, arr[:, 0], :, :] = np.arange(len(loc))[:, None, None]
            else:
                self._lut[u, arr[:, 0], arr[:, 1], arr[:, 2]] = np.arange(len(loc))
        self._components = None

    def __len__(self):
        return self.size

    def local_index_arrays(self):
        """(M, S) array of each user's local index for every joint index."""
        idx = np.arange(self.size, dtype=np.int64)
        return np.stack([(idx // self.strides[u]) % self.local_sizes[u] for u in range(self.config.M)])

    def components(self):
        """(rx, tx, r) arrays of shape (S, M) for every joint state."""
        if self._components is None:
            loc = self.local_index_arrays()
            rx = np.stack([self.local_arrays[u][loc[u], 0] for u in range(self.config.M)], axis=1)
            tx = np.stack([self.local_arrays[u][loc[u], 1] for u in range(self.config.M)], axis=1)
            rr = np.stack([self.local_arrays[u][loc[u], 2] for u in range(self.config.M)], axis=1)
            self._components = (rx, tx, rr)
        return self._components

    def index_arrays(self, rx, tx, r):
        """Joint index from per-user component arrays (last axis = users)."""
        users = np.arange(self.config.M)
        loc = self._lut[users, rx, tx, r]
        if np.any(loc < 0):
            raise KeyError("state outside the enumerated space")
        return int(loc @ self.strides) if np.ndim(loc) == 1 else loc @ self.strides

    def index(self, state: SystemState) -> int:
        try:
            return self.index_arrays(np.asarray(state.rx), np.asarray(state.tx), np.asarray(state.retx))
        except (KeyError, IndexError):
            raise KeyError(f"{state} is not in the enumerated state space") from None

    def state(self, i) -> SystemState:
        if not 0 <= i < self.size:
            raise IndexError(i)
        parts = [self.local_states[u][(i // int(self.strides[u])) % self.local_sizes[u]] for u in range(self.config.M)]
        rx, tx, rr = zip(*parts)
        return SystemState(rx, tx, rr)

    def states(self):
        return [self.state(i) for i in range(self.size)]

    @property
    def initial_index(self):
        return self.index(self.config.initial_state)


def enumerate_states(config, protocol, reachable=False, cap=DEFAULT_CAP):
    """Ordered state list and index map; see :class:`StateSpace`."""
    space = StateSpace(config, protocol, reachable=reachable, cap=cap)
    states = space.states()
    return states, {s: i for i, s in enumerate(states)}
