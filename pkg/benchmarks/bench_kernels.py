#!/usr/bin/env python3
"""Time the particle-filter kernels on the numba and numpy backends.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --particles 2000 20000 --repeats 500
    python3 benchmarks/bench_kernels.py --output bench.json

Both backends get identical inputs; the script also checks that their
outputs agree before reporting timings.
"""

import argparse
import json
import time

import numpy as np

from ptzloc import _kernels as K


def _time(fn, repeats):
    fn()  # warm-up (JIT compile on first call)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench(n, repeats, rng):
    rho = 10.0 + rng.standard_normal(n)
    rho_dot = 0.1 * rng.standard_normal(n)
    w = rng.random(n)
    w /= w.sum()
    nr, nd = 0.3 * rng.standard_normal(n), 0.1 * rng.standard_normal(n)
    offset = float(rng.random())

    cases = {
        "predict": (lambda: K.predict_numpy(rho, rho_dot, 0.125, nr, nd),
                    lambda: K.predict_numba(rho, rho_dot, 0.125, nr, nd)),
        "rbf_update": (lambda: K.rbf_update_numpy(rho, w, 10.2, 0.5),
                       lambda: K.rbf_update_numba(rho, w, 10.2, 0.5)),
        "systematic_indices": (lambda: K.systematic_indices_numpy(w, offset, n),
                               lambda: K.systematic_indices_numba(w, offset, n)),
    }
    rows = []
    for name, (f_np, f_nb) in cases.items():
        a, b = f_np(), f_nb()
        a = a if isinstance(a, tuple) else (a,)
        b = b if isinstance(b, tuple) else (b,)
        agree = all(np.allclose(x, y, rtol=1e-12, atol=1e-12) for x, y in zip(a, b))
        t_np = _time(f_np, repeats)
        t_nb = _time(f_nb, repeats) if K.NUMBA_AVAILABLE else float("nan")
        rows.append({"kernel": name, "n": n, "numpy_us": t_np * 1e6, "numba_us": t_nb * 1e6,
                     "speedup": t_np / t_nb, "outputs_agree": bool(agree)})
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--particles", type=int, nargs="+", default=[2000, 20000])
    parser.add_argument("--repeats", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", type=str, default=None, help="write results as JSON")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"active backend: {K.BACKEND}  (numba available: {K.NUMBA_AVAILABLE})")
    print(f"{'kernel':<20} {'N':>7} {'numpy us':>10} {'numba us':>10} {'speedup':>8}  agree")
    results = []
    for n in args.particles:
        for row in bench(n, args.repeats, rng):
            results.append(row)
            print(f"{row['kernel']:<20} {row['n']:>7} {row['numpy_us']:>10.1f} {row['numba_us']:>10.1f} "
                  f"{row['speedup']:>8.2f}  {row['outputs_agree']}")
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
