"""Compare the compiled and numpy fixed-point kernels.

Times one full solve of Q = V*(Q+t)(I+tQ)^{-1}V from the lower start for
random invertible V over a few sizes and t values, and reports the
relative difference between the two backends' fixed points.

Usage::

    python benchmarks/bench_kernels.py --sizes 4 8 16 32 --t 0.1 0.01 --repeat 3
"""
import argparse
import time

import numpy as np

from vstab import kernels
from vstab.oracle import generate_test_operator
from vstab.qsolver import SolveConfig
from vstab.substrate import adjoint, opnorm


def _solve(impl, V, t, fp_tol, max_iter):
    M = V.entries
    Q0 = t * (adjoint(M) @ M)
    start = time.perf_counter()
    Q, its, status, _ = impl.congruence_iterate(M, Q0, 1.0, t, t, 1.0, fp_tol, max_iter,
                                                True, True, True)
    return time.perf_counter() - start, Q, its, status


def run(sizes, ts, repeat, seed, fp_tol):
    backends = kernels.available_backends()
    rows = []
    for n in sizes:
        V = generate_test_operator("random_invertible", n, seed)
        for t in ts:
            max_iter = SolveConfig(t=t).iteration_budget
            row = {"n": n, "t": t}
            results = {}
            for name, impl in backends.items():
                best = np.inf
                for _ in range(repeat):
                    dt, Q, its, status = _solve(impl, V, t, fp_tol, max_iter)
                    best = min(best, dt)
                results[name] = Q
                row[name] = best
                row["iterations"] = its
                row["status"] = status
            if len(results) == 2:
                row["speedup"] = row["python"] / row["cython"]
                row["rel_diff"] = opnorm(results["cython"] - results["python"]) / opnorm(results["python"])
            rows.append(row)
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 16, 32])
    p.add_argument("--t", type=float, nargs="+", default=[0.1, 0.01])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fp-tol", type=float, default=1e-11)
    args = p.parse_args(argv)

    rows = run(args.sizes, args.t, args.repeat, args.seed, args.fp_tol)
    have_c = "cython" in kernels.available_backends()
    if not have_c:
        print("compiled kernel not built; timing the numpy fallback only")
    header = f"{'n':>4} {'t':>8} {'iters':>7} {'python s':>10}"
    if have_c:
        header += f" {'cython s':>10} {'speedup':>8} {'rel diff':>10}"
    print(header)
    for r in rows:
        line = f"{r['n']:>4} {r['t']:>8.2g} {r['iterations']:>7} {r['python']:>10.4f}"
        if have_c:
            line += f" {r['cython']:>10.4f} {r['speedup']:>8.2f} {r['rel_diff']:>10.2e}"
        print(line)


if __name__ == "__main__":
    main()
