"""Numba vs pure-numpy timings for every hot kernel at Cora-like sizes.

    python benchmarks/bench_kernels.py [--nodes 2708] [--repeat 20]

Both twins are called directly, so one process times both paths regardless
of SEAL_DISABLE_NUMBA. The first numba call (compilation) is not timed.
"""

import argparse
import timeit

import numpy as np

from seal import kernels
from seal._accel import tune_allocator
from seal.graph import generate_synthetic, normalize_adjacency


def cases(n, features, hidden, rng):
    bundle = generate_synthetic(n, 7, features, 8.0 / (n / 7), 1.0 / n, 0.05, seed=0)
    adj = normalize_adjacency(bundle)
    csr = (adj.indptr, adj.indices, adj.data)
    h = rng.standard_normal((n, hidden))
    wide = rng.standard_normal((n, 128))
    logits = rng.standard_normal((n, 7)) * 3
    draws = rng.integers(0, 2 ** 32, size=wide.shape, dtype=np.uint32)
    thr = np.uint32(2 ** 31)
    return {
        "csr_matmul": ((*csr, h),),
        "csr_t_matmul": ((*csr, h, n),),
        "softmax_rows": ((logits,),),
        "logsumexp_rows": ((logits,),),
        "leaky_relu": ((wide, 0.2),),
        "leaky_relu_backward": ((wide, wide, 0.2),),
        "apply_keep_mask": ((wide, draws, thr, 2.0),),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=2708)
    ap.add_argument("--features", type=int, default=1433)
    ap.add_argument("--hidden", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    tune_allocator()
    rng = np.random.default_rng(0)

    print(f"{'kernel':22s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, (call_args,) in cases(args.nodes, args.features, args.hidden, rng).items():
        fast = getattr(kernels, name + "_numba")
        slow = getattr(kernels, name + "_numpy")
        a, b = fast(*call_args), slow(*call_args)       # warm-up, and a parity check
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-12)
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        print(f"{name:22s} {t_fast * 1e3:10.3f} {t_slow * 1e3:10.3f} {t_slow / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
