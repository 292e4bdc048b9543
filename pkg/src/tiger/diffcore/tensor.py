"""Minimal reverse-mode autodiff over 2-D float64 arrays.

A global tape records one backward closure per operation in execution
order; since execution order is already a topological order of the graph,
``backward`` simply replays the tape in reverse (Wengert-list style).
The tape is scoped to one training step: callers run forward + backward,
apply the optimizer, then ``clear_tape()``.

Everything is (rows, cols) float64. Vectors are (1, d) or (n, 1) as the
operation demands. Ops raise :class:`ShapeError` on mismatched operands,
naming both shapes.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


_TAPE: list = []
_GRAD_ON: bool = True


def clear_tape() -> None:
    _TAPE.clear()


def tape_size() -> int:
    return len(_TAPE)


@contextmanager
def no_grad():
    """Disable tape recording inside the block (pure forward passes)."""
    global _GRAD_ON
    prev = _GRAD_ON
    _GRAD_ON = False
    try:
        yield
    finally:
        _GRAD_ON = prev


class Tensor:
    """A 2-D float64 array plus an accumulated gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def add_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def const(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _track(*ts: Tensor) -> bool:
    return _GRAD_ON and any(t.requires_grad for t in ts)


def _record(out: Tensor, fn) -> None:
    out.requires_grad = True
    _TAPE.append((out, fn))


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable Tensor's .grad."""
    if loss.shape != (1, 1):
        raise ShapeError(f"backward expects a (1, 1) scalar, got {loss.shape}")
    loss.add_grad(np.ones((1, 1)))
    for out, fn in reversed(_TAPE):
        if out.grad is not None:
            fn(out.grad)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    if _track(a, b):
        def bw(g):
            if a.requires_grad:
                a.add_grad(g @ b.data.T)
            if b.requires_grad:
                b.add_grad(a.data.T @ g)
        _record(out, bw)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with b a (1, d) row bias."""
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} vs weight {w.shape}")
    if b.shape != (1, w.shape[1]):
        raise ShapeError(f"linear: bias {b.shape} vs weight {w.shape}")
    out = Tensor(x.data @ w.data + b.data)
    if _track(x, w, b):
        def bw(g):
            if x.requires_grad:
                x.add_grad(g @ w.data.T)
            if w.requires_grad:
                w.add_grad(x.data.T @ g)
            if b.requires_grad:
                b.add_grad(g.sum(axis=0, keepdims=True))
        _record(out, bw)
    return out


def _broadcast_ok(sa, sb):
    return all(m == n or m == 1 or n == 1 for m, n in zip(sa, sb))


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"add: {a.shape} + {b.shape}")
    out = Tensor(a.data + b.data)
    if _track(a, b):
        def bw(g):
            if a.requires_grad:
                a.add_grad(_reduce_to(g, a.shape))
            if b.requires_grad:
                b.add_grad(_reduce_to(g, b.shape))
        _record(out, bw)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"sub: {a.shape} - {b.shape}")
    out = Tensor(a.data - b.data)
    if _track(a, b):
        def bw(g):
            if a.requires_grad:
                a.add_grad(_reduce_to(g, a.shape))
            if b.requires_grad:
                b.add_grad(_reduce_to(-g, b.shape))
        _record(out, bw)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; either operand may broadcast along one axis."""
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"mul: {a.shape} * {b.shape}")
    out = Tensor(a.data * b.data)
    if _track(a, b):
        def bw(g):
            if a.requires_grad:
                a.add_grad(_reduce_to(g * b.data, a.shape))
            if b.requires_grad:
                b.add_grad(_reduce_to(g * a.data, b.shape))
        _record(out, bw)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c)
    if _track(x):
        def bw(g):
            x.add_grad(g * c)
        _record(out, bw)
    return out


def concat_cols(parts: list[Tensor]) -> Tensor:
    rows = parts[0].shape[0]
    for p in parts:
        if p.shape[0] != rows:
            raise ShapeError(f"concat_cols: row counts {[p.shape for p in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    if _track(*parts):
        widths = [p.shape[1] for p in parts]
        def bw(g):
            ofs = 0
            for p, w in zip(parts, widths):
                if p.requires_grad:
                    p.add_grad(g[:, ofs : ofs + w])
                ofs += w
        _record(out, bw)
    return out


def concat_rows(parts: list[Tensor]) -> Tensor:
    cols = parts[0].shape[1]
    for p in parts:
        if p.shape[1] != cols:
            raise ShapeError(f"concat_rows: col counts {[p.shape for p in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    if _track(*parts):
        heights = [p.shape[0] for p in parts]
        def bw(g):
            ofs = 0
            for p, h in zip(parts, heights):
                if p.requires_grad:
                    p.add_grad(g[ofs : ofs + h, :])
                ofs += h
        _record(out, bw)
    return out


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows: out[m] = x[idx[m]]. Backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx])
    if _track(x):
        def bw(g):
            dx = np.zeros_like(x.data)
            kernels.scatter_add_rows(dx, idx, g)
            x.add_grad(dx)
        _record(out, bw)
    return out


def col_slice(x: Tensor, j0: int, j1: int) -> Tensor:
    out = Tensor(x.data[:, j0:j1])
    if _track(x):
        def bw(g):
            dx = np.zeros_like(x.data)
            dx[:, j0:j1] = g
            x.add_grad(dx)
        _record(out, bw)
    return out


def take_per_row(x: Tensor, col_idx: np.ndarray) -> Tensor:
    """out[m, 0] = x[m, col_idx[m]] (e.g. Q-value of the chosen action)."""
    col_idx = np.asarray(col_idx, dtype=np.int64)
    if col_idx.shape[0] != x.shape[0]:
        raise ShapeError(f"take_per_row: {x.shape} with {col_idx.shape[0]} indices")
    rows = np.arange(x.shape[0])
    out = Tensor(x.data[rows, col_idx][:, None])
    if _track(x):
        def bw(g):
            dx = np.zeros_like(x.data)
            np.add.at(dx, (rows, col_idx), g[:, 0])
            x.add_grad(dx)
        _record(out, bw)
    return out


def reshape(x: Tensor, rows: int, cols: int) -> Tensor:
    if rows * cols != x.data.size:
        raise ShapeError(f"reshape: {x.shape} -> ({rows}, {cols})")
    out = Tensor(x.data.reshape(rows, cols))
    if _track(x):
        def bw(g):
            x.add_grad(g.reshape(x.data.shape))
        _record(out, bw)
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    if _track(x):
        mask = x.data > 0.0
        def bw(g):
            x.add_grad(g * mask)
        _record(out, bw)
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    out = Tensor(np.where(x.data >= 0.0, x.data, slope * x.data))
    if _track(x):
        fac = np.where(x.data >= 0.0, 1.0, slope)
        def bw(g):
            x.add_grad(g * fac)
        _record(out, bw)
    return out


def elu(x: Tensor) -> Tensor:
    neg = np.expm1(np.minimum(x.data, 0.0))
    out = Tensor(np.where(x.data > 0.0, x.data, neg))
    if _track(x):
        fac = np.where(x.data > 0.0, 1.0, neg + 1.0)
        def bw(g):
            x.add_grad(g * fac)
        _record(out, bw)
    return out


def abs_(x: Tensor) -> Tensor:
    out = Tensor(np.abs(x.data))
    if _track(x):
        sign = np.sign(x.data)
        def bw(g):
            x.add_grad(g * sign)
        _record(out, bw)
    return out


def cos(x: Tensor) -> Tensor:
    out = Tensor(np.cos(x.data))
    if _track(x):
        neg_sin = -np.sin(x.data)
        def bw(g):
            x.add_grad(g * neg_sin)
        _record(out, bw)
    return out


def rows_dot(a: Tensor, b: Tensor) -> Tensor:
    """Per-row inner product: out[m, 0] = a[m] . b[m]."""
    if a.shape != b.shape:
        raise ShapeError(f"rows_dot: {a.shape} . {b.shape}")
    out = Tensor((a.data * b.data).sum(axis=1, keepdims=True))
    if _track(a, b):
        def bw(g):
            if a.requires_grad:
                a.add_grad(g * b.data)
            if b.requires_grad:
                b.add_grad(g * a.data)
        _record(out, bw)
    return out


def sum_cols(x: Tensor) -> Tensor:
    """Row sums: (M, d) -> (M, 1)."""
    out = Tensor(x.data.sum(axis=1, keepdims=True))
    if _track(x):
        def bw(g):
            x.add_grad(np.broadcast_to(g, x.data.shape).copy())
        _record(out, bw)
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.array([[x.data.sum()]]))
    if _track(x):
        def bw(g):
            x.add_grad(np.full_like(x.data, g[0, 0]))
        _record(out, bw)
    return out


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction; rows sum to 1."""
    if logits.data.size == 0:
        raise ValueError("softmax: empty input")
    if not np.all(np.isfinite(logits.data)):
        raise ValueError("softmax: non-finite logits")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p)
    if _track(logits):
        def bw(g):
            dot = (g * p).sum(axis=1, keepdims=True)
            logits.add_grad(p * (g - dot))
        _record(out, bw)
    return out


def segment_softmax(scores: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    """Softmax of a (M, 1) score column within segments; empty segments allowed."""
    if scores.shape[1] != 1:
        raise ShapeError(f"segment_softmax: scores must be (M, 1), got {scores.shape}")
    seg = np.asarray(seg, dtype=np.int64)
    alpha = kernels.segment_softmax_forward(scores.data[:, 0], seg, n_seg)
    out = Tensor(alpha[:, None])
    if _track(scores):
        def bw(g):
            ds = kernels.segment_softmax_backward(g[:, 0], alpha, seg, n_seg)
            scores.add_grad(ds[:, None])
        _record(out, bw)
    return out


def segment_sum(x: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    """Sum rows into per-segment rows: (M, d) -> (n_seg, d); empty segments give 0."""
    seg = np.asarray(seg, dtype=np.int64)
    out = Tensor(kernels.segment_sum_forward(x.data, seg, n_seg))
    if _track(x):
        def bw(g):
            x.add_grad(g[seg])
        _record(out, bw)
    return out


def gru_cell(x: Tensor, h: Tensor, wx: Tensor, wh: Tensor, bx: Tensor, bh: Tensor) -> Tensor:
    """One GRU step: returns the next hidden state (B, H).

    wx: (in_dim, 3H), wh: (H, 3H), biases (1, 3H); gate layout
    [reset | update | candidate]. The gate math runs in a fused kernel.
    """
    H = h.shape[1]
    if wx.shape != (x.shape[1], 3 * H) or wh.shape != (H, 3 * H):
        raise ShapeError(
            f"gru_cell: x {x.shape}, h {h.shape}, wx {wx.shape}, wh {wh.shape}"
        )
    if x.shape[0] != h.shape[0]:
        raise ShapeError(f"gru_cell: batch {x.shape} vs hidden {h.shape}")
    gx = x.data @ wx.data + bx.data
    gh = h.data @ wh.data + bh.data
    h_new, r, z, n = kernels.gru_gates_forward(gx, gh, h.data)
    out = Tensor(h_new)
    if _track(x, h, wx, wh, bx, bh):
        gh_n = gh[:, 2 * H :]
        def bw(g):
            dgx, dgh, dh_direct = kernels.gru_gates_backward(g, r, z, n, h.data, gh_n)
            if x.requires_grad:
                x.add_grad(dgx @ wx.data.T)
            if wx.requires_grad:
                wx.add_grad(x.data.T @ dgx)
            if bx.requires_grad:
                bx.add_grad(dgx.sum(axis=0, keepdims=True))
            if h.requires_grad:
                h.add_grad(dh_direct + dgh @ wh.data.T)
            if wh.requires_grad:
                wh.add_grad(h.data.T @ dgh)
            if bh.requires_grad:
                bh.add_grad(dgh.sum(axis=0, keepdims=True))
        _record(out, bw)
    return out
