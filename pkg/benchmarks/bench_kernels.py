"""Compare the numba kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once to trigger compilation, then the best of ``--repeat``
timings is reported for both paths along with the largest output difference.
Set REFLEKT_DISABLE_JIT=1 to make the package itself use the fallbacks.
"""
import argparse
import time

import numpy as np

from reflekt import kernels
from reflekt._accel import HAS_NUMBA


def best_of(func, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    rho = np.abs(rng.normal(1.0, 0.05, 200_000))
    n = 2000
    a = rng.uniform(-1, 0, n)
    c = rng.uniform(-1, 0, n)
    b = 2.5 + np.abs(a) + np.abs(c)
    d = rng.normal(size=n)
    samples = rng.uniform(-1.1, 1.1, 500_000)
    nodes = np.linspace(-1, 1, 201)
    return {
        "radial_project": (lambda: kernels.radial_project_jit(rho, 1.0, 0.5),
                           lambda: kernels.radial_project_numpy(rho, 1.0, 0.5)),
        "thomas_solve": (lambda: kernels.thomas_solve_jit(a, b, c, d),
                         lambda: kernels.thomas_solve_numpy(a, b, c, d)),
        "hat_bin": (lambda: kernels.hat_bin_jit(samples, nodes),
                    lambda: kernels.hat_bin_numpy(samples, nodes)),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    print(f"numba available: {HAS_NUMBA}")
    print(f"{'kernel':<16}{'jit [ms]':>10}{'numpy [ms]':>12}{'speedup':>9}{'max diff':>11}")
    for name, (jit, ref) in cases(np.random.default_rng(args.seed)).items():
        jit()
        tj, oj = best_of(jit, args.repeat)
        tn, on = best_of(ref, args.repeat)
        oj = oj[0] if isinstance(oj, tuple) else oj
        on = on[0] if isinstance(on, tuple) else on
        diff = float(np.max(np.abs(np.asarray(oj) - np.asarray(on))))
        print(f"{name:<16}{1e3 * tj:>10.2f}{1e3 * tn:>12.2f}{tn / tj:>9.1f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
