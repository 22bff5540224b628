"""Scenario files: YAML documents that fully determine a batch of runs.

Schema (defaults in brackets)::

    name: fig3
    M: 3
    N: 15                        # age cap [50]
    weights: [1, 1, 1]           # [all ones]
    protocol:
      variant: arq               # arq | harq | fr
      p: [0.5, 0.2, 0.1]         # arq
      g: [[...], ...]            # harq, or base: [...] with r_max: 3
      n_s: 5                     # fr, with p_symbol: [...] or p_block: [...]
      k_s: 3
    lam: [0.4, 0.6, 0.8, 1.0]    # scalar or list [1.0]
    policies: [optimal, whittle] # see POLICIES
    horizon: 100000              # slots per run [10000]
    seeds: 100                   # count, "a:b" range or explicit list [10]
    episodes: 300                # DQN training episodes [300]
    params: {ucrl2-vi: {alpha: 10}}
    out: results/fig3            # [results/<name>]
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Tuple

import yaml

from ..env.model import FrHarq, GeneralHarq, ModelConfig, StandardArq
from ..errors import ScenarioError

log = logging.getLogger(__name__)

PLANNERS = ("optimal", "whittle", "greedy", "round-robin")
LEARNERS = ("ucrl2-vi", "ucrl2-whittle", "sarsa-lfa", "dqn")
POLICIES = PLANNERS + LEARNERS

_TOP_KEYS = {"name", "M", "N", "weights", "protocol", "lam", "policies", "horizon", "seeds", "episodes",
             "params", "out"}
_PROTO_KEYS = {"arq": {"variant", "p"}, "harq": {"variant", "g", "base", "r_max"},
               "fr": {"variant", "n_s", "k_s", "p_symbol", "p_block"}}


@dataclass(frozen=True)
class Scenario:
    name: str
    M: int
    N: int
    weights: Tuple[float, ...]
    protocol: dict
    lams: Tuple[float, ...] = (1.0,)
    policies: Tuple[str, ...] = ("whittle",)
    horizon: int = 10_000
    seeds: Tuple[int, ...] = tuple(range(10))
    episodes: int = 300
    params: dict = field(default_factory=dict)
    out: str = ""

    def build_protocol(self):
        return build_protocol(self.protocol, self.M)

    def config(self, lam=1.0):
        proto = self.build_protocol()
        return ModelConfig(self.M, self.N, proto.r_max, self.weights, float(lam))

    def to_dict(self):
        d = asdict(self)
        d["lams"] = list(self.lams)
        d["policies"] = list(self.policies)
        d["seeds"] = list(self.seeds)
        d["weights"] = list(self.weights)
        return d

    def to_spec(self):
        """Plain mapping in the file schema; scenario_from_dict round-trips it."""
        return {"name": self.name, "M": self.M, "N": self.N, "weights": list(self.weights),
                "protocol": dict(self.protocol), "lam": list(self.lams), "policies": list(self.policies),
                "horizon": self.horizon, "seeds": list(self.seeds), "episodes": self.episodes,
                "params": {k: dict(v) for k, v in self.params.items()}, "out": self.out}

    def digest(self):
        """Reproducibility key: hash of every field except the output path."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **kw):
        d = {**self.__dict__, **kw}
        return Scenario(**d)


def build_protocol(spec, M=None):
    variant = spec.get("variant", "arq")
    if variant == "arq":
        proto = StandardArq(tuple(spec["p"]))
    elif variant == "harq":
        if "g" in spec:
            proto = GeneralHarq(tuple(tuple(row) for row in spec["g"]))
        else:
            proto = GeneralHarq.geometric(spec["base"], int(spec["r_max"]))
    elif variant == "fr":
        if "p_block" in spec:
            proto = FrHarq.from_block_errors(int(spec["n_s"]), int(spec["k_s"]), tuple(spec["p_block"]))
        else:
            proto = FrHarq(int(spec["n_s"]), int(spec["k_s"]), tuple(spec["p_symbol"]))
    else:
        raise ScenarioError(f"protocol.variant: expected one of arq, harq, fr, got {variant!r}")
    if M is not None and proto.M != M:
        raise ScenarioError(f"protocol: describes {proto.M} users but M = {M}")
    return proto


def parse_seeds(value):
    """int n -> 0..n-1; "a:b" -> a..b-1; list -> as given."""
    if isinstance(value, bool):
        raise ScenarioError("seeds: expected int, 'a:b' or list of ints, got bool")
    if isinstance(value, int):
        if value < 1:
            raise ScenarioError("seeds: need at least one seed")
        return tuple(range(value))
    if isinstance(value, str):
        if ":" in value:
            a, b = value.split(":", 1)
            try:
                seeds = tuple(range(int(a), int(b)))
            except ValueError:
                raise ScenarioError(f"seeds: cannot parse range {value!r}") from None
            if not seeds:
                raise ScenarioError(f"seeds: empty range {value!r}")
            return seeds
        try:
            return tuple(int(s) for s in value.split(","))
        except ValueError:
            raise ScenarioError(f"seeds: cannot parse {value!r}") from None
    if isinstance(value, (list, tuple)) and value and all(isinstance(s, int) for s in value):
        return tuple(value)
    raise ScenarioError(f"seeds: expected int, 'a:b' or list of ints, got {value!r}")


def _unknown(keys, allowed, where, strict):
    extra = sorted(set(keys) - allowed)
    if not extra:
        return
    msg = f"{where}: unknown key(s) {', '.join(extra)}"
    if strict:
        raise ScenarioError(msg)
    log.warning(msg)


def _typed(d, key, typ, default, what):
    v = d.get(key, default)
    if typ is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, typ) or isinstance(v, bool):
        raise ScenarioError(f"{key}: expected {what}, got {type(v).__name__}")
    return v


def scenario_from_dict(d, strict=True):
    if not isinstance(d, dict):
        raise ScenarioError("scenario: expected a mapping at the top level")
    _unknown(d, _TOP_KEYS, "scenario", strict)
    for key in ("M", "protocol"):
        if key not in d:
            raise ScenarioError(f"{key}: required key missing")
    M = _typed(d, "M", int, None, "int")
    if M < 1:
        raise ScenarioError("M: need at least one user")
    proto = d["protocol"]
    if not isinstance(proto, dict):
        raise ScenarioError(f"protocol: expected mapping, got {type(proto).__name__}")
    variant = proto.get("variant", "arq")
    if variant not in _PROTO_KEYS:
        raise ScenarioError(f"protocol.variant: expected one of arq, harq, fr, got {variant!r}")
    _unknown(proto, _PROTO_KEYS[variant], "protocol", strict)
    weights = d.get("weights", [1.0] * M)
    if not isinstance(weights, list) or len(weights) != M:
        raise ScenarioError(f"weights: expected list of {M} numbers")
    lam = d.get("lam", 1.0)
    lams = tuple(float(x) for x in (lam if isinstance(lam, list) else [lam]))
    if any(not 0.0 < x <= 1.0 for x in lams):
        raise ScenarioError(f"lam: every budget must be in (0, 1], got {list(lams)}")
    policies = d.get("policies", ["whittle"])
    if isinstance(policies, str):
        policies = [policies]
    bad = [p for p in policies if p not in POLICIES]
    if bad:
        raise ScenarioError(f"policies: unknown {bad}; expected any of {list(POLICIES)}")
    params = d.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ScenarioError(f"params: expected mapping, got {type(params).__name__}")
    _unknown(params, set(POLICIES), "params", strict)
    name = str(d.get("name", "scenario"))
    sc = Scenario(
        name=name,
        M=M,
        N=_typed(d, "N", int, 50, "int"),
        weights=tuple(float(w) for w in weights),
        protocol=dict(proto),
        lams=lams,
        policies=tuple(policies),
        horizon=_typed(d, "horizon", int, 10_000, "int"),
        seeds=parse_seeds(d.get("seeds", 10)),
        episodes=_typed(d, "episodes", int, 300, "int"),
        params={k: dict(v) for k, v in params.items()},
        out=str(d.get("out", f"results/{name}")),
    )
    try:
        sc.config(lams[0])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"protocol: {exc}") from None
    return sc


def load_scenario(path, strict=True):
    """Parse and validate a YAML scenario file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: not valid YAML ({exc})") from None
    return scenario_from_dict(data, strict)
