"""Compare the numba kernels against the numpy/scipy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 97 385 1537] [--repeat 50]

Reports the best-of-``repeat`` time per call for residual/Jacobian assembly
and the block-tridiagonal solve, plus a full baseline forward solve, and
checks that both paths agree.
"""
import argparse
import json
import time

import numpy as np

from fiml import kernels
from fiml.channel import CaseConfig, grid_for, initial_state, solve_forward


def best_time(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_size(n, repeat):
    re_tau = 550.0 if n < 200 else 2000.0
    cfg = CaseConfig(re_tau=re_tau, n=n, stretch=80.0)
    grid = grid_for(cfg)
    st = initial_state(grid, cfg)
    beta = np.ones(n)
    args = (st.u, st.nu_tilde, beta, grid.hf, grid.vol, grid.stencil, grid.d, cfg.viscosity, cfg.forcing,
            cfg.sa_tuple(), grid.symmetric)
    row = dict(n=n)
    out = {}
    for flag, tag in ((True, "numba"), (False, "numpy")):
        R, A, B, C, _ = kernels.assemble(*args, use_numba=flag)
        rhs = np.random.default_rng(0).standard_normal((n, 2))
        row[f"assemble_{tag}_us"] = 1e6 * best_time(lambda: kernels.assemble(*args, use_numba=flag), repeat)
        row[f"solve_{tag}_us"] = 1e6 * best_time(lambda: kernels.block_solve(A, B, C, rhs, use_numba=flag), repeat)
        out[tag] = (R, kernels.block_solve(A, B, C, rhs, use_numba=flag))
    row["max_rel_diff_residual"] = float(np.max(np.abs(out["numba"][0] - out["numpy"][0])) /
                                         np.max(np.abs(out["numpy"][0])))
    row["max_rel_diff_solve"] = float(np.max(np.abs(out["numba"][1] - out["numpy"][1])) /
                                      np.max(np.abs(out["numpy"][1])))
    saved = kernels.USE_NUMBA
    try:
        for flag, tag in ((True, "numba"), (False, "numpy")):
            kernels.USE_NUMBA = flag
            row[f"forward_{tag}_ms"] = 1e3 * best_time(lambda: solve_forward(beta, cfg, grid), max(1, repeat // 10))
    finally:
        kernels.USE_NUMBA = saved
    return row


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--sizes", type=int, nargs="+", default=[97, 385, 1537])
    p.add_argument("--repeat", type=int, default=50)
    p.add_argument("--json", help="also write results to this file")
    args = p.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = [bench_size(n, args.repeat) for n in args.sizes]
    cols = ["n", "assemble_numba_us", "assemble_numpy_us", "solve_numba_us", "solve_numpy_us",
            "forward_numba_ms", "forward_numpy_ms", "max_rel_diff_residual", "max_rel_diff_solve"]
    print("  ".join(f"{c:>22}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>22.4g}" if isinstance(r[c], float) else f"{r[c]:>22}" for c in cols))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
