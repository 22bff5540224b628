"""Lagrange multiplier search and constrained (mixture) policy construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from ..errors import BracketError, NotUnichain
from .evaluation import evaluate_policy_exact
from .policies import DeterministicPolicy, MixturePolicy, TimeSharingPolicy
from .rvi import _as_model, rvi_solve


@dataclass
class Probe:
    eta: float
    policy: DeterministicPolicy
    C: float
    J: float
    h: np.ndarray = field(repr=False, default=None)


@dataclass
class EtaSearchResult:
    """Either a single multiplier meeting the budget or a bracketing pair.

    When `bracket` is set, C(low) >= lam >= C(high) and the two policies
    are the inputs for :func:`build_mixture`.
    """

    eta: float
    policy: DeterministicPolicy
    C: float
    J: float
    bracket: Optional[tuple] = None
    iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def needs_mixing(self):
        return self.bracket is not None


def eta_search(model_or_config, protocol=None, lam=None, alpha0=None, tol=1e-4, sa_iters=30, max_iter=200,
               eta_rel_tol=1e-7, rvi_eps=1e-9):
    """Find the smallest eta whose optimal policy meets the transmission budget.

    Runs the stochastic-approximation update eta <- max(0, eta + alpha0/m (C - lam))
    until the budget is bracketed, then bisects. alpha0 defaults to sum(w) * N,
    the scale of the AoI cost.
    """
    model = _as_model(model_or_config, protocol)
    cfg = model.space.config
    lam = cfg.lam if lam is None else float(lam)
    if not 0.0 < lam <= 1.0:
        raise ValueError("lam must be in (0, 1]")
    if alpha0 is None:
        alpha0 = float(sum(cfg.weights)) * cfg.N
    history = []
    warm = [None]

    def probe(eta):
        pol, vt = rvi_solve(model, eta=eta, epsilon=rvi_eps, h0=warm[0])
        warm[0] = vt.h
        ev = evaluate_policy_exact(pol, model)
        history.append((float(eta), ev.C))
        return Probe(float(eta), pol, ev.C, ev.J, vt.h)

    def done(p, it):
        return EtaSearchResult(p.eta, p.policy, p.C, p.J, None, it, history)

    p0 = probe(0.0)
    if p0.C <= lam + tol:
        return done(p0, 1)
    lo, hi = p0, None
    eta = 0.0
    C = p0.C
    it = 1
    for m in range(1, sa_iters + 1):
        eta = max(0.0, eta + alpha0 / m * (C - lam))
        p = probe(eta)
        it += 1
        C = p.C
        if abs(C - lam) <= tol:
            return done(p, it)
        if C > lam and p.eta > lo.eta:
            lo = p
        if C < lam and (hi is None or p.eta < hi.eta):
            hi = p
        if hi is not None and lo.eta < hi.eta:
            break
    if hi is None:
        eta = max(2.0 * lo.eta, alpha0)
        while hi is None:
            if it >= max_iter:
                raise BracketError(f"no multiplier with C <= {lam} found up to eta={eta}")
            p = probe(eta)
            it += 1
            if abs(p.C - lam) <= tol:
                return done(p, it)
            if p.C < lam:
                hi = p
            else:
                lo = p
                eta *= 2.0
    # bisection; C(eta) is non-increasing
    while hi.eta - lo.eta > eta_rel_tol * max(1.0, hi.eta):
        if it >= max_iter:
            break
        p = probe(0.5 * (lo.eta + hi.eta))
        it += 1
        if abs(p.C - lam) <= tol:
            return done(p, it)
        if p.C > lam:
            lo = p
        else:
            hi = p
    res = EtaSearchResult(hi.eta, hi.policy, hi.C, hi.J, (lo, hi), it, history)
    return res


@dataclass
class MixtureResult:
    policy: object
    construction: str        # "deterministic", "single-state" or "time-sharing"
    J: float
    C: float
    state: Optional[int] = None
    mu: Optional[float] = None
    switches_tried: int = 0

    @property
    def flagged(self):
        return self.construction == "time-sharing"


def build_mixture(policy_low, policy_high, model_or_config, protocol=None, lam=None, c_tol=1e-6):
    """Mix a high-rate and a low-rate policy so that C equals `lam`.

    Disagreeing states are switched from the low-eta policy to the high-eta
    one in index order; the first switch that moves C across `lam` yields a
    pair differing in one state, which is randomized. If no such switch is
    found the result falls back to time sharing and is flagged.
    """
    model = _as_model(model_or_config, protocol)
    lam = model.space.config.lam if lam is None else float(lam)
    ev_low = evaluate_policy_exact(policy_low, model)
    ev_high = evaluate_policy_exact(policy_high, model)
    if not ev_low.C + 1e-12 >= lam >= ev_high.C - 1e-12:
        raise ValueError(f"need C(low)={ev_low.C:.6f} >= lam={lam} >= C(high)={ev_high.C:.6f}")
    diff = policy_low.differs_from(policy_high)
    if len(diff) == 0 or abs(ev_low.C - lam) <= 1e-12:
        mix = MixturePolicy(policy_low, model.space.initial_index,
                            policy_low.actions[model.space.initial_index], 1.0)
        return MixtureResult(mix, "deterministic", ev_low.J, ev_low.C, None, 1.0)
    if abs(ev_high.C - lam) <= 1e-12:
        mix = MixturePolicy(policy_high, model.space.initial_index,
                            policy_high.actions[model.space.initial_index], 1.0)
        return MixtureResult(mix, "deterministic", ev_high.J, ev_high.C, None, 1.0)

    prev, c_prev = policy_low, ev_low.C
    tried = 0
    pair = None
    for s in diff:
        cur = prev.with_action(int(s), int(policy_high.actions[s]))
        tried += 1
        try:
            c_cur = evaluate_policy_exact(cur, model).C
        except NotUnichain:
            break
        if c_cur <= lam:
            pair = (prev, int(s), int(policy_high.actions[s]), c_prev, c_cur)
            break
        prev, c_prev = cur, c_cur

    if pair is not None:
        base, s, alt, c_hi, c_lo = pair

        def gap(mu):
            return evaluate_policy_exact(MixturePolicy(base, s, alt, mu), model).C - lam

        try:
            if abs(c_lo - lam) <= 1e-12:
                mu = 0.0
            else:
                mu = brentq(gap, 0.0, 1.0, xtol=1e-13, rtol=1e-13)
            mix = MixturePolicy(base, s, alt, mu)
            ev = evaluate_policy_exact(mix, model)
            if abs(ev.C - lam) <= c_tol:
                return MixtureResult(mix, "single-state", ev.J, ev.C, s, mu, tried)
        except (NotUnichain, ValueError):
            pass

    mu = (lam - ev_high.C) / (ev_low.C - ev_high.C)
    ts = TimeSharingPolicy(policy_low, policy_high, mu)
    ev = evaluate_policy_exact(ts, model)
    return MixtureResult(ts, "time-sharing", ev.J, ev.C, None, mu, tried)


@dataclass
class ConstrainedSolution:
    eta: float
    policy: object
    J: float
    C: float
    construction: str
    search: EtaSearchResult
    mixture: Optional[MixtureResult] = None


def solve_constrained(model_or_config, protocol=None, lam=None, **search_kw):
    """eta search followed by mixing when the optimal rate jumps across lam."""
    model = _as_model(model_or_config, protocol)
    lam = model.space.config.lam if lam is None else float(lam)
    res = eta_search(model, lam=lam, **search_kw)
    if not res.needs_mixing:
        return ConstrainedSolution(res.eta, res.policy, res.J, res.C, "deterministic", res)
    lo, hi = res.bracket
    mix = build_mixture(lo.policy, hi.policy, model, lam=lam)
    return ConstrainedSolution(hi.eta, mix.policy, mix.J, mix.C, mix.construction, res, mix)
