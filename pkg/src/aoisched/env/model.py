"""Value types of the multi-user status-update model.

Users are 1-indexed in the public API (``Action.new(1)`` targets the first
user); per-user tuples inside :class:`SystemState` are 0-indexed as usual.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

from ..numerics import block_error_prob


@dataclass(frozen=True)
class SystemState:
    """Per-user (receiver age, transmitter age, retransmission count)."""

    rx: Tuple[int, ...]
    tx: Tuple[int, ...]
    retx: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "rx", tuple(int(v) for v in self.rx))
        object.__setattr__(self, "tx", tuple(int(v) for v in self.tx))
        object.__setattr__(self, "retx", tuple(int(v) for v in self.retx))
        if not len(self.rx) == len(self.tx) == len(self.retx):
            raise ValueError("rx, tx and retx must have one entry per user")

    @property
    def M(self):
        return len(self.rx)

    @classmethod
    def initial(cls, M, N):
        return cls(tuple(min(j, N) for j in range(1, M + 1)), (1,) * M, (0,) * M)

    @classmethod
    def from_ages(cls, rx, tx=None, retx=None):
        M = len(rx)
        return cls(tuple(rx), tuple(tx) if tx is not None else (1,) * M,
                   tuple(retx) if retx is not None else (0,) * M)

    def users(self):
        return list(zip(self.rx, self.tx, self.retx))

    def check(self, N, r_max):
        for a, b, r in self.users():
            if not (1 <= a <= N and 1 <= b <= N and 0 <= r <= r_max):
                raise ValueError(f"state {self} outside [1,{N}]x[1,{N}]x[0,{r_max}]")


class ActionKind(Enum):
    IDLE = "idle"
    NEW = "new"
    RETX = "retx"


@dataclass(frozen=True, order=True)
class Action:
    kind: ActionKind
    user: int = 0

    @classmethod
    def idle(cls):
        return cls(ActionKind.IDLE, 0)

    @classmethod
    def new(cls, j):
        return cls(ActionKind.NEW, int(j))

    @classmethod
    def retx(cls, j):
        return cls(ActionKind.RETX, int(j))

    @property
    def is_idle(self):
        return self.kind is ActionKind.IDLE

    def index(self, M):
        """Integer code: Idle=0, New(j)=j, Retx(j)=M+j.

        This is also the tie-breaking order used by every planner.
        """
        if self.kind is ActionKind.IDLE:
            return 0
        if self.kind is ActionKind.NEW:
            return self.user
        return M + self.user

    @classmethod
    def from_index(cls, i, M):
        i = int(i)
        if i == 0:
            return cls.idle()
        if 1 <= i <= M:
            return cls.new(i)
        if M < i <= 2 * M:
            return cls.retx(i - M)
        raise ValueError(f"action index {i} out of range for M={M}")

    def __str__(self):
        if self.kind is ActionKind.IDLE:
            return "i"
        return ("n" if self.kind is ActionKind.NEW else "x") + str(self.user)

    @classmethod
    def parse(cls, text):
        text = text.strip()
        if text == "i":
            return cls.idle()
        if text[0] == "n":
            return cls.new(int(text[1:]))
        if text[0] == "x":
            return cls.retx(int(text[1:]))
        raise ValueError(f"cannot parse action {text!r}")


class Outcome(Enum):
    ACK = 1
    NACK = 0


@dataclass(frozen=True)
class Feedback:
    outcome: Optional[Outcome]
    target: Optional[int] = None

    @property
    def ack(self):
        return self.outcome is Outcome.ACK


@dataclass(frozen=True)
class CostSample:
    aoi_cost: float
    tx_cost: int


# -- protocols ---------------------------------------------------------------


def _check_prob(p, what):
    if not 0.0 <= p < 1.0:
        raise ValueError(f"{what} must lie in [0, 1), got {p}")


@dataclass(frozen=True)
class StandardArq:
    """Failed packets are dropped; every attempt fails with probability p_j."""

    p: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        for v in self.p:
            _check_prob(v, "ARQ error probability")

    name = "arq"

    @property
    def M(self):
        return len(self.p)

    @property
    def r_max(self):
        return 0

    def error_table(self):
        return tuple((v,) for v in self.p)


@dataclass(frozen=True)
class GeneralHarq:
    """g[j][r] is the decoding error probability of user j+1 after r retransmissions."""

    g: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        g = tuple(tuple(float(v) for v in row) for row in self.g)
        object.__setattr__(self, "g", g)
        widths = {len(row) for row in g}
        if len(widths) != 1 or 0 in widths:
            raise ValueError("every user needs an error curve of the same length r_max+1")
        for row in g:
            for v in row:
                _check_prob(v, "HARQ error probability")
            if any(b > a for a, b in zip(row, row[1:])):
                raise ValueError(f"HARQ error curve must be non-increasing in r, got {row}")

    name = "harq"

    @property
    def M(self):
        return len(self.g)

    @property
    def r_max(self):
        return len(self.g[0]) - 1

    def error_table(self):
        return self.g

    @classmethod
    def geometric(cls, base, r_max):
        """g_j(r) = base_j * 2**-r, the exponentially decaying HARQ profile."""
        return cls(tuple(tuple(b * 2.0 ** -r for r in range(r_max + 1)) for b in base))


@dataclass(frozen=True)
class FrHarq:
    """Fixed-redundancy HARQ with an (n_s, k_s) MDS code.

    Either per-user symbol erasure probabilities ``p_symbol`` or the
    resulting block error probabilities ``p_block`` may be given.
    """

    n_s: int
    k_s: int
    p_symbol: Optional[Tuple[float, ...]] = None
    p_block: Optional[Tuple[float, ...]] = field(default=None)

    def __post_init__(self):
        if not 1 <= self.k_s <= self.n_s:
            raise ValueError(f"need 1 <= k_s <= n_s, got ({self.n_s}, {self.k_s})")
        if self.p_symbol is None and self.p_block is None:
            raise ValueError("FrHarq needs p_symbol or p_block")
        if self.p_symbol is not None:
            ps = tuple(float(v) for v in self.p_symbol)
            for v in ps:
                _check_prob(v, "symbol error probability")
            object.__setattr__(self, "p_symbol", ps)
            blocks = tuple(block_error_prob(self.n_s, self.k_s, v) for v in ps)
            if self.p_block is None:
                object.__setattr__(self, "p_block", blocks)
        pb = tuple(float(v) for v in self.p_block)
        for v in pb:
            _check_prob(v, "block error probability")
        object.__setattr__(self, "p_block", pb)

    name = "fr"

    @classmethod
    def from_block_errors(cls, n_s, k_s, p_block):
        return cls(n_s, k_s, None, tuple(p_block))

    @property
    def M(self):
        return len(self.p_block)

    @property
    def r_max(self):
        return 0

    def error_table(self):
        return tuple((v,) for v in self.p_block)


Protocol = (StandardArq, GeneralHarq, FrHarq)


@dataclass(frozen=True)
class ModelConfig:
    M: int
    N: int
    r_max: int = 0
    weights: Optional[Tuple[float, ...]] = None
    lam: float = 1.0
    initial_state: Optional[SystemState] = None

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("need at least one user")
        if self.N < 2:
            raise ValueError("maximum age N must be at least 2")
        if self.r_max < 0:
            raise ValueError("r_max must be non-negative")
        w = (1.0,) * self.M if self.weights is None else tuple(float(v) for v in self.weights)
        if len(w) != self.M or any(v <= 0 for v in w):
            raise ValueError(f"need {self.M} positive weights, got {w}")
        object.__setattr__(self, "weights", w)
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"transmission budget must be in (0, 1], got {self.lam}")
        s0 = self.initial_state or SystemState.initial(self.M, self.N)
        if s0.M != self.M:
            raise ValueError("initial state has the wrong number of users")
        s0.check(self.N, self.r_max)
        object.__setattr__(self, "initial_state", s0)

    @classmethod
    def for_protocol(cls, protocol, N, weights=None, lam=1.0, initial_state=None):
        return cls(protocol.M, N, protocol.r_max, weights, lam, initial_state)

    def with_lam(self, lam):
        return ModelConfig(self.M, self.N, self.r_max, self.weights, lam, self.initial_state)

    def validate_protocol(self, protocol):
        if protocol.M != self.M:
            raise ValueError(f"protocol describes {protocol.M} users, config has {self.M}")
        if protocol.r_max != self.r_max:
            raise ValueError(f"protocol r_max={protocol.r_max} but config r_max={self.r_max}")
        if isinstance(protocol, FrHarq) and protocol.n_s >= self.N:
            raise ValueError("FR-HARQ needs N > n_s")

    def aoi_cost(self, state: SystemState) -> float:
        return float(sum(w * d for w, d in zip(self.weights, state.rx)))


def n_actions(protocol) -> int:
    return 2 * protocol.M + 1 if isinstance(protocol, GeneralHarq) else protocol.M + 1


def all_actions(protocol) -> Sequence[Action]:
    return [Action.from_index(i, protocol.M) for i in range(n_actions(protocol))]


def protocol_dict(protocol) -> dict:
    if isinstance(protocol, StandardArq):
        return {"variant": "arq", "p": list(protocol.p)}
    if isinstance(protocol, GeneralHarq):
        return {"variant": "harq", "g": [list(row) for row in protocol.g]}
    d = {"variant": "fr", "n_s": protocol.n_s, "k_s": protocol.k_s, "p_block": list(protocol.p_block)}
    if protocol.p_symbol is not None:
        d["p_symbol"] = list(protocol.p_symbol)
    return d


def config_dict(config: ModelConfig) -> dict:
    s0 = config.initial_state
    return {"M": config.M, "N": config.N, "r_max": config.r_max, "weights": list(config.weights),
            "lam": config.lam, "initial_state": [list(s0.rx), list(s0.tx), list(s0.retx)]}


def model_fingerprint(config: ModelConfig, protocol) -> str:
    """Short stable hash of (config, protocol) used to tag serialized artifacts."""
    blob = json.dumps({"config": config_dict(config), "protocol": protocol_dict(protocol)},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
