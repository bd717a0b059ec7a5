"""Timing comparison of the two propagation-kernel paths.

The path is fixed at import time by INVSPEC_NO_NUMBA, so the comparison
runs the same workload in two subprocesses, one per path, and reports
the per-call times side by side:

    python3 bench/kernel_benchmark.py [--reps 5] [--grid 2000] [--batch 48]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def run_workload(grid, batch, reps):
    import numpy as np

    import invspec as iv
    import invspec.forward as forward
    import invspec.kernels as kernels

    c = iv.zero_coefficients(4, grid)
    ctx = forward._ctx(c)
    a_nodes, cmat = ctx.a_nodes[False], ctx.cmat[False]
    rng = np.random.default_rng(0)
    lams = rng.uniform(-200.0, 200.0, batch) + 1j * rng.uniform(0.5, 8.0, batch)
    y0 = np.eye(4, dtype=np.complex128)

    calls = {
        "propagate_final": lambda: kernels.propagate_final(
            a_nodes, cmat, lams, y0, substeps=2),
        "propagate_nodes": lambda: kernels.propagate_nodes(
            a_nodes, cmat, lams[:8], y0, substeps=1),
        "interval_transfers": lambda: kernels.interval_transfers(
            a_nodes, cmat, lams[:8], substeps=1),
    }
    threads = 1
    if kernels.USE_NUMBA:
        import numba
        threads = numba.get_num_threads()
    out = {"path": "numba" if kernels.USE_NUMBA else "numpy",
           "threads": threads, "times": {}}
    for name, fn in calls.items():
        fn()                        # warm-up; compiles on the jit path
        best = float("inf")
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out["times"][name] = best
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--grid", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=48)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.child:
        print(json.dumps(run_workload(args.grid, args.batch, args.reps)))
        return

    results = {}
    for label, flag in (("numba", ""), ("numpy", "1")):
        env = dict(os.environ, INVSPEC_NO_NUMBA=flag)
        cmd = [sys.executable, os.path.abspath(__file__), "--child",
               "--reps", str(args.reps), "--grid", str(args.grid),
               "--batch", str(args.batch)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True,
                              check=True)
        payload = json.loads(proc.stdout.strip().splitlines()[-1])
        if payload["path"] != label:
            print(f"note: requested {label} path, got {payload['path']} "
                  "(numba unavailable?)", file=sys.stderr)
        results[label] = payload

    width = max(len(k) for k in results["numba"]["times"])
    print(f"grid={args.grid} batch={args.batch} "
          f"numba_threads={results['numba']['threads']} "
          f"(best of {args.reps}, seconds)")
    print(f"{'kernel':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name in results["numba"]["times"]:
        tn = results["numba"]["times"][name]
        tp = results["numpy"]["times"][name]
        print(f"{name:<{width}}  {tn:>10.4f}  {tp:>10.4f}  {tp / tn:>7.1f}x")


if __name__ == "__main__":
    main()
