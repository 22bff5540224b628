"""Closed-form lower bounds on the weighted average AoI of any policy."""

from __future__ import annotations

import math


def _selector(weights, probs):
    """Index minimizing w p / (1 - p); lowest index on ties."""
    vals = [w * p / (1.0 - p) for w, p in zip(weights, probs)]
    return min(range(len(vals)), key=lambda j: (vals[j], j))


def _check(weights, probs, lam):
    if len(weights) != len(probs) or not weights:
        raise ValueError("need one error probability per weight")
    if not 0.0 < lam <= 1.0:
        raise ValueError("lam must be in (0, 1]")
    for p in probs:
        if not 0.0 <= p < 1.0:
            raise ValueError("error probabilities must be in [0, 1)")


def _bound(weights, probs, lam, n_s):
    _check(weights, probs, lam)
    root = sum(math.sqrt(w / (1.0 - p)) for w, p in zip(weights, probs))
    j = _selector(weights, probs)
    first = n_s / (2.0 * lam) * root ** 2
    middle = lam * n_s * weights[j] * probs[j] / (2.0 * (1.0 - probs[j]))
    last = sum(w * (n_s - 0.5) for w in weights)
    return first + middle + last


def lower_bound_arq(weights, error_probs, lam):
    """Lower bound for standard ARQ with per-slot budget lam."""
    return _bound(list(weights), list(error_probs), float(lam), 1)


def lower_bound_fr(weights, fr_error_probs, lam, n_s):
    """Lower bound for FR-HARQ with block length n_s; equals the ARQ bound at n_s = 1."""
    return _bound(list(weights), list(fr_error_probs), float(lam), int(n_s))


def optimal_lambda_split(weights, error_probs, lam):
    """Per-user budgets minimizing the decoupled first-order term; they sum to lam."""
    _check(list(weights), list(error_probs), lam)
    r = [math.sqrt(w / (1.0 - p)) for w, p in zip(weights, error_probs)]
    tot = sum(r)
    return [lam * v / tot for v in r]


def lower_bound(config, protocol):
    """Bound matching a (config, protocol) pair; None for general HARQ."""
    from .env.model import FrHarq, StandardArq

    if isinstance(protocol, StandardArq):
        return lower_bound_arq(config.weights, protocol.p, config.lam)
    if isinstance(protocol, FrHarq):
        return lower_bound_fr(config.weights, protocol.p_block, config.lam, protocol.n_s)
    return None
