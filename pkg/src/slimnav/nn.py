"""Numpy building blocks shared by the depth network and the Q-network."""

from __future__ import annotations

from typing import Callable

import numpy as np


def he_init(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))


class Adam:
    """Adaptive moment estimation over a fixed list of parameter arrays (updated in place).

    ``weight_decay`` is added to the gradient (L2 coupling) for the arrays
    flagged in ``decay_mask``.
    """

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0, decay_mask: list[bool] | None = None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decay_mask = decay_mask if decay_mask is not None else [True] * len(params)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v, decay in zip(self.params, grads, self.m, self.v, self.decay_mask):
            if decay and self.weight_decay:
                g = g + self.weight_decay * p
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}


def huber(residual: np.ndarray, delta: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise Huber loss and its derivative w.r.t. the residual."""
    a = np.abs(residual)
    quad = a <= delta
    loss = np.where(quad, 0.5 * residual ** 2, delta * (a - 0.5 * delta))
    grad = np.where(quad, residual, delta * np.sign(residual))
    return loss, grad


def numeric_gradient(loss_fn: Callable[[], float], params: list[np.ndarray], epsilon: float) -> list[np.ndarray]:
    """Central finite differences of ``loss_fn`` w.r.t. every entry of ``params`` (perturbed in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + epsilon
            up = loss_fn()
            flat[i] = old - epsilon
            down = loss_fn()
            flat[i] = old
            gflat[i] = (up - down) / (2.0 * epsilon)
        out.append(g)
    return out


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray], floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        if a.size == 0:
            continue
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
