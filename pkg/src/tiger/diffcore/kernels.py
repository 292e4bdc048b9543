"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a numba ``@njit`` version and a vectorized
pure-numpy version with identical semantics. The active backend is chosen
once at import time from the ``TIGER_KERNELS`` environment variable
(``numba`` or ``numpy``); unset means numba when importable, numpy
otherwise. ``benchmarks/bench_kernels.py`` times the two side by side.

All arrays are float64; segment ids are int64. Kernels are pure functions
(except ``scatter_add_rows`` which accumulates in place by design).
"""

from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("TIGER_KERNELS", "").strip().lower()
if _FLAG not in ("", "numba", "numpy"):
    raise ValueError(f"TIGER_KERNELS must be 'numba' or 'numpy', got {_FLAG!r}")

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False
    if _FLAG == "numba":
        raise

_USE_NUMBA = _HAVE_NUMBA and _FLAG != "numpy"


def active_backend() -> str:
    """Name of the backend the module-level kernels dispatch to."""
    return "numba" if _USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _sigmoid_np(x):
    # stable two-branch form; both branches are evaluated, so silence overflow
    with np.errstate(over="ignore"):
        pos = 1.0 / (1.0 + np.exp(-x))
        ex = np.exp(x)
        neg = ex / (1.0 + ex)
    return np.where(x >= 0.0, pos, neg)


def gru_gates_forward_np(gx, gh, h):
    """Fused GRU gate math after the two input/hidden matmuls.

    gx, gh: (B, 3H) pre-activations laid out [reset | update | candidate].
    Returns (h_new, r, z, n); r/z/n are cached for the backward pass.
    """
    H = h.shape[1]
    r = _sigmoid_np(gx[:, :H] + gh[:, :H])
    z = _sigmoid_np(gx[:, H : 2 * H] + gh[:, H : 2 * H])
    n = np.tanh(gx[:, 2 * H :] + r * gh[:, 2 * H :])
    h_new = (1.0 - z) * n + z * h
    return h_new, r, z, n


def gru_gates_backward_np(dh_new, r, z, n, h, gh_n):
    """Backward of the fused gate math.

    Returns (dgx, dgh, dh) matching the forward's gx/gh/h arguments.
    """
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z
    dpre_n = dn * (1.0 - n * n)
    dr = dpre_n * gh_n
    dpre_r = dr * r * (1.0 - r)
    dpre_z = dz * z * (1.0 - z)
    dgx = np.concatenate([dpre_r, dpre_z, dpre_n], axis=1)
    dgh = np.concatenate([dpre_r, dpre_z, dpre_n * r], axis=1)
    return dgx, dgh, dh


def segment_softmax_forward_np(scores, seg, n_seg):
    """Softmax of `scores` (M,) within groups given by `seg` (M,) int64."""
    m = np.full(n_seg, -np.inf)
    np.maximum.at(m, seg, scores)
    e = np.exp(scores - m[seg])
    s = np.zeros(n_seg)
    np.add.at(s, seg, e)
    return e / s[seg]


def segment_softmax_backward_np(dalpha, alpha, seg, n_seg):
    dot = np.zeros(n_seg)
    np.add.at(dot, seg, alpha * dalpha)
    return alpha * (dalpha - dot[seg])


def segment_sum_forward_np(x, seg, n_seg):
    """Sum rows of x (M, d) into (n_seg, d) by segment id."""
    out = np.zeros((n_seg, x.shape[1]))
    np.add.at(out, seg, x)
    return out


def scatter_add_rows_np(out, idx, src):
    """out[idx[m]] += src[m] for every row m (in place)."""
    np.add.at(out, idx, src)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def gru_gates_forward_nb(gx, gh, h):
        B, H = h.shape
        h_new = np.empty((B, H))
        r = np.empty((B, H))
        z = np.empty((B, H))
        n = np.empty((B, H))
        for b in range(B):
            for k in range(H):
                xr = gx[b, k] + gh[b, k]
                if xr >= 0.0:
                    rv = 1.0 / (1.0 + math.exp(-xr))
                else:
                    e = math.exp(xr)
                    rv = e / (1.0 + e)
                xz = gx[b, H + k] + gh[b, H + k]
                if xz >= 0.0:
                    zv = 1.0 / (1.0 + math.exp(-xz))
                else:
                    e = math.exp(xz)
                    zv = e / (1.0 + e)
                nv = math.tanh(gx[b, 2 * H + k] + rv * gh[b, 2 * H + k])
                r[b, k] = rv
                z[b, k] = zv
                n[b, k] = nv
                h_new[b, k] = (1.0 - zv) * nv + zv * h[b, k]
        return h_new, r, z, n

    @njit(cache=True)
    def gru_gates_backward_nb(dh_new, r, z, n, h, gh_n):
        B, H = h.shape
        dgx = np.empty((B, 3 * H))
        dgh = np.empty((B, 3 * H))
        dh = np.empty((B, H))
        for b in range(B):
            for k in range(H):
                g = dh_new[b, k]
                dn = g * (1.0 - z[b, k])
                dz = g * (h[b, k] - n[b, k])
                dh[b, k] = g * z[b, k]
                dpre_n = dn * (1.0 - n[b, k] * n[b, k])
                dr = dpre_n * gh_n[b, k]
                dpre_r = dr * r[b, k] * (1.0 - r[b, k])
                dpre_z = dz * z[b, k] * (1.0 - z[b, k])
                dgx[b, k] = dpre_r
                dgx[b, H + k] = dpre_z
                dgx[b, 2 * H + k] = dpre_n
                dgh[b, k] = dpre_r
                dgh[b, H + k] = dpre_z
                dgh[b, 2 * H + k] = dpre_n * r[b, k]
        return dgx, dgh, dh

    @njit(cache=True)
    def segment_softmax_forward_nb(scores, seg, n_seg):
        M = scores.shape[0]
        m = np.full(n_seg, -np.inf)
        for i in range(M):
            s = seg[i]
            if scores[i] > m[s]:
                m[s] = scores[i]
        e = np.empty(M)
        tot = np.zeros(n_seg)
        for i in range(M):
            e[i] = math.exp(scores[i] - m[seg[i]])
            tot[seg[i]] += e[i]
        for i in range(M):
            e[i] = e[i] / tot[seg[i]]
        return e

    @njit(cache=True)
    def segment_softmax_backward_nb(dalpha, alpha, seg, n_seg):
        M = alpha.shape[0]
        dot = np.zeros(n_seg)
        for i in range(M):
            dot[seg[i]] += alpha[i] * dalpha[i]
        ds = np.empty(M)
        for i in range(M):
            ds[i] = alpha[i] * (dalpha[i] - dot[seg[i]])
        return ds

    @njit(cache=True)
    def segment_sum_forward_nb(x, seg, n_seg):
        M, d = x.shape
        out = np.zeros((n_seg, d))
        for i in range(M):
            s = seg[i]
            for k in range(d):
                out[s, k] += x[i, k]
        return out

    @njit(cache=True)
    def scatter_add_rows_nb(out, idx, src):
        M, d = src.shape
        for i in range(M):
            r = idx[i]
            for k in range(d):
                out[r, k] += src[i, k]


if _USE_NUMBA:
    gru_gates_forward = gru_gates_forward_nb
    gru_gates_backward = gru_gates_backward_nb
    segment_softmax_forward = segment_softmax_forward_nb
    segment_softmax_backward = segment_softmax_backward_nb
    segment_sum_forward = segment_sum_forward_nb
    scatter_add_rows = scatter_add_rows_nb
else:
    gru_gates_forward = gru_gates_forward_np
    gru_gates_backward = gru_gates_backward_np
    segment_softmax_forward = segment_softmax_forward_np
    segment_softmax_backward = segment_softmax_backward_np
    segment_sum_forward = segment_sum_forward_np
    scatter_add_rows = scatter_add_rows_np
