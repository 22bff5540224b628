"""One-hidden-layer ReLU network in numpy, with Adam and a gradient check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class MlpParams:
    """Q(x) = W2 relu(W1 x + b1) + b2, plus Adam moments per parameter."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def init(cls, n_in, n_hidden, n_out, rng):
        """He-uniform hidden layer, Glorot-uniform output layer, zero biases."""
        lim1 = np.sqrt(6.0 / n_in)
        lim2 = np.sqrt(6.0 / (n_hidden + n_out))
        return cls(rng.uniform(-lim1, lim1, (n_hidden, n_in)), np.zeros(n_hidden),
                   rng.uniform(-lim2, lim2, (n_out, n_hidden)), np.zeros(n_out))

    @classmethod
    def zeros(cls, n_in, n_hidden, n_out):
        return cls(np.zeros((n_hidden, n_in)), np.zeros(n_hidden), np.zeros((n_out, n_hidden)), np.zeros(n_out))

    @property
    def shape(self):
        return self.W1.shape[1], self.W1.shape[0], self.W2.shape[0]

    def arrays(self):
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self):
        """Deep copy of the weights (moments are not needed by target nets)."""
        return MlpParams(*(getattr(self, k).copy() for k in PARAM_NAMES))

    def load_from(self, other):
        for k in PARAM_NAMES:
            getattr(self, k)[...] = getattr(other, k)

    def is_finite(self):
        return all(np.all(np.isfinite(getattr(self, k))) for k in PARAM_NAMES)


def _check_input(params, x):
    x = np.asarray(x, dtype=float)
    n_in = params.W1.shape[1]
    if x.shape[-1] != n_in:
        raise ValueError(f"input width {x.shape[-1]} does not match the network ({n_in})")
    return x


def mlp_forward(params, x):
    """Q-values for one encoding (shape (n_in,)) or a batch (shape (B, n_in))."""
    x = _check_input(params, x)
    h = np.maximum(0.0, x @ params.W1.T + params.b1)
    return h @ params.W2.T + params.b2


def mlp_backward(params, x, grad_out):
    """Gradients of sum(grad_out * Q(x)) w.r.t. the parameters.

    `grad_out` has the output's shape; pass dLoss/dQ for a scalar loss.
    """
    x = np.atleast_2d(_check_input(params, x))
    g = np.atleast_2d(np.asarray(grad_out, dtype=float))
    if g.shape != (x.shape[0], params.W2.shape[0]):
        raise ValueError(f"grad_out shape {g.shape} does not match output shape {(x.shape[0], params.W2.shape[0])}")
    pre = x @ params.W1.T + params.b1
    h = np.maximum(0.0, pre)
    gh = (g @ params.W2) * (pre > 0)
    return {"W1": gh.T @ x, "b1": gh.sum(axis=0), "W2": g.T @ h, "b2": g.sum(axis=0)}


def adam_step(params, grads, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update with bias-corrected moments; returns params."""
    params.t += 1
    c1 = 1.0 - beta1 ** params.t
    c2 = 1.0 - beta2 ** params.t
    for k in PARAM_NAMES:
        g = grads[k]
        p = getattr(params, k)
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        m = params.m.setdefault(k, np.zeros_like(p))
        v = params.v.setdefault(k, np.zeros_like(p))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


def gradient_check(params, x, grad_out, h=1e-6):
    """Max relative error between mlp_backward and central differences.

    The relative error of each entry is |a - n| / max(1e-8, |a| + |n|).
    """
    analytic = mlp_backward(params, x, grad_out)
    g = np.atleast_2d(grad_out)
    worst = 0.0
    for k in PARAM_NAMES:
        p = getattr(params, k)
        num = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            fp = float(np.sum(g * np.atleast_2d(mlp_forward(params, x))))
            p[i] = old - h
            fm = float(np.sum(g * np.atleast_2d(mlp_forward(params, x))))
            p[i] = old
            num[i] = (fp - fm) / (2 * h)
        err = np.abs(analytic[k] - num) / np.maximum(1e-8, np.abs(analytic[k]) + np.abs(num))
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst
