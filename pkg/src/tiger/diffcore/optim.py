"""Adam with bias correction, global-norm gradient clipping, and init helpers."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor


class TrainingError(RuntimeError):
    """Raised when an update would corrupt parameters (e.g. non-finite grads)."""


def init_uniform(rng: np.random.Generator, rows: int, cols: int, fan_in: int | None = None) -> np.ndarray:
    """Weight init: uniform in +-1/sqrt(fan_in); fan_in defaults to rows."""
    if fan_in is None:
        fan_in = rows
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(rows, cols))


def clip_global_norm(grads: list[np.ndarray], max_norm: float = 10.0) -> tuple[list[np.ndarray], float]:
    """Scale all grads by max_norm/norm when the joint L2 norm exceeds max_norm.

    Returns (possibly rescaled grads, pre-clip norm). Never increases the norm.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    sq = 0.0
    for g in grads:
        sq += float((g * g).sum())
    norm = math.sqrt(sq)
    if norm <= max_norm:
        return grads, norm
    factor = max_norm / norm
    return [g * factor for g in grads], norm


class Adam:
    """Adam over a named, ordered parameter dict.

    The parameter dict is fixed at construction; every later `step` must
    provide a gradient for each parameter (zeros are fine).
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 5e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name in self.params:
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        for k in self.m:
            self.m[k][...] = state["m"][k]
            self.v[k][...] = state["v"][k]


def adam_step(opt: Adam, grads: dict[str, np.ndarray]) -> None:
    """Functional alias for one optimizer update."""
    opt.step(grads)
