#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy twins.

Shapes mirror a real training step (batch 32 episodes x 3 agents, GRU
width 64, ~2k temporal-attention entries). Run:

    python benchmarks/bench_kernels.py [--repeats 200]

The active default backend is whatever `TIGER_KERNELS` selects; this
script always times both implementations directly.
"""

import argparse
import time

import numpy as np

from tiger.diffcore import kernels as K


def timeit(fn, repeats):
    fn()  # warm (numba compiles here)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e6


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    B, H = 96, 64
    gx = rng.normal(size=(B, 3 * H))
    gh = rng.normal(size=(B, 3 * H))
    h = rng.normal(size=(B, H))
    dh = rng.normal(size=(B, H))
    _, r, z, n = K.gru_gates_forward_np(gx, gh, h)

    M, S, d = 2000, B, 32
    scores = rng.normal(size=M)
    seg = np.sort(rng.integers(0, S, size=M)).astype(np.int64)
    x = rng.normal(size=(M, d))
    alpha = K.segment_softmax_forward_np(scores, seg, S)
    dalpha = rng.normal(size=M)
    idx = rng.integers(0, S, size=M).astype(np.int64)
    src = rng.normal(size=(M, H))

    def scatter(fn):
        out = np.zeros((S, H))
        return lambda: fn(out, idx, src)

    cases = [
        ("gru_gates_forward", lambda: K.gru_gates_forward_nb(gx, gh, h),
         lambda: K.gru_gates_forward_np(gx, gh, h)),
        ("gru_gates_backward",
         lambda: K.gru_gates_backward_nb(dh, r, z, n, h, gh[:, 2 * H:]),
         lambda: K.gru_gates_backward_np(dh, r, z, n, h, gh[:, 2 * H:])),
        ("segment_softmax_fwd",
         lambda: K.segment_softmax_forward_nb(scores, seg, S),
         lambda: K.segment_softmax_forward_np(scores, seg, S)),
        ("segment_softmax_bwd",
         lambda: K.segment_softmax_backward_nb(dalpha, alpha, seg, S),
         lambda: K.segment_softmax_backward_np(dalpha, alpha, seg, S)),
        ("segment_sum", lambda: K.segment_sum_forward_nb(x, seg, S),
         lambda: K.segment_sum_forward_np(x, seg, S)),
        ("scatter_add_rows", scatter(K.scatter_add_rows_nb),
         scatter(K.scatter_add_rows_np)),
    ]

    print(f"default backend: {K.active_backend()}  (repeats={args.repeats})")
    print(f"{'kernel':<22}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for name, nb, np_ in cases:
        try:
            t_nb = timeit(nb, args.repeats)
        except AttributeError:
            print(f"{name:<22}{'n/a':>12}{timeit(np_, args.repeats):>12.1f}")
            continue
        t_np = timeit(np_, args.repeats)
        print(f"{name:<22}{t_nb:>12.1f}{t_np:>12.1f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
