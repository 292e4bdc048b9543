"""Shared test helpers: central-difference gradient checking."""

from __future__ import annotations

import numpy as np

import tiger.diffcore as dc


def fd_gradcheck(forward, params, rng, n_coords: int = 8, eps: float = 1e-5,
                 rel_tol: float = 1e-4) -> float:
    """Compare tape gradients of a scalar `forward()` against central differences.

    Samples `n_coords` coordinates per parameter tensor. Returns the worst
    relative error seen; asserts it stays under `rel_tol`.
    """
    dc.clear_tape()
    loss = forward()
    dc.backward(loss)
    grads = {id(p): (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
             for p in params}
    for p in params:
        p.zero_grad()
    dc.clear_tape()

    worst = 0.0
    for p in params:
        g = grads[id(p)]
        rows, cols = p.data.shape
        for _ in range(min(n_coords, p.data.size)):
            idx = (int(rng.integers(rows)), int(rng.integers(cols)))
            old = p.data[idx]
            p.data[idx] = old + eps
            with dc.no_grad():
                up = forward().data[0, 0]
            p.data[idx] = old - eps
            with dc.no_grad():
                down = forward().data[0, 0]
            p.data[idx] = old
            fd = (up - down) / (2 * eps)
            denom = max(1e-6, abs(fd), abs(g[idx]))
            worst = max(worst, abs(fd - g[idx]) / denom)
    assert worst < rel_tol, f"gradcheck failed: worst relative error {worst}"
    return worst
