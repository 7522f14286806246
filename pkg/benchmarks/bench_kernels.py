"""Time the numba and numpy kernel backends on representative inputs.

    python3 benchmarks/bench_kernels.py [--m 2000] [--n 50000] [--density 0.01]
"""
import argparse
import timeit

import numpy as np
import scipy.sparse as sp

from dalsolve._kernels import get_backend


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--n", type=int, default=50000)
    ap.add_argument("--density", type=float, default=0.01)
    ap.add_argument("--active", type=float, default=0.05, help="fraction of active columns")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    M = sp.random(args.m, args.n, density=args.density, format="csc", random_state=rng)
    M.sort_indices()
    ip, ix, data = M.indptr.astype(np.int64), M.indices.astype(np.int64), M.data
    cols = np.sort(rng.choice(args.n, int(args.active * args.n), replace=False)).astype(np.int64)
    x = rng.standard_normal(cols.size)
    y = rng.standard_normal(args.m)
    v = rng.standard_normal(args.n)
    ptr = np.arange(0, args.n + 1, 10, dtype=np.int64)
    ratios = rng.random(ptr.size - 1)
    q = rng.standard_normal(args.n)

    cases = {
        "csc_matvec_cols": lambda k: k.csc_matvec_cols(ip, ix, data, cols, x, args.m),
        "csc_rmatvec_cols": lambda k: k.csc_rmatvec_cols(ip, ix, data, cols, y),
        "csc_row_sq_cols": lambda k: k.csc_row_sq_cols(ip, ix, data, cols, x, args.m),
        "soft_threshold": lambda k: k.soft_threshold(v, 0.5),
        "group_shrink": lambda k: k.group_shrink(v, ptr, 0.5),
        "group_jacobian_apply": lambda k: k.group_jacobian_apply(v, ptr, ratios, q),
    }
    backends = [get_backend("numpy"), get_backend("numba")]
    for fn in cases.values():           # trigger compilation outside the timing
        fn(backends[1])
    print(f"m={args.m} n={args.n} nnz={M.nnz} active cols={cols.size}")
    print(f"{'kernel':24s}{'numpy ms':>12s}{'numba ms':>12s}{'speedup':>10s}")
    for name, fn in cases.items():
        t = [min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) * 1e3
             for k in backends]
        print(f"{name:24s}{t[0]:12.3f}{t[1]:12.3f}{t[0] / t[1]:10.1f}")


if __name__ == "__main__":
    main()
