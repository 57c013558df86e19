"""Benchmark the MVN integration kernels: numba @njit vs pure numpy.

Times equicoordinate probability evaluations and a full quantile search on
representative problems (M=3 and M=9 with strong positive correlation, the
shapes the trend procedures produce).  The numba kernel is warmed up before
timing so compilation is excluded.

Run:  python benchmarks/bench_mvn.py
"""

import time

import numpy as np

from trendlab._mvn_kernels import HAVE_NUMBA
from trendlab.mvn import MvnProblem, equicoordinate_quantile, mvn_prob


def equicorrelation(m: int, rho: float) -> np.ndarray:
    R = np.full((m, m), rho)
    np.fill_diagonal(R, 1.0)
    return R


def time_call(fn, repeat: int = 20) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    problems = {
        "M=3 rho=0.9 t=2.0": MvnProblem(equicorrelation(3, 0.9), 2.0),
        "M=9 rho=0.85 t=2.5": MvnProblem(equicorrelation(9, 0.85), 2.5),
    }
    if HAVE_NUMBA:
        mvn_prob(problems["M=3 rho=0.9 t=2.0"], backend="numba")  # warm up JIT

    print(f"{'problem':<22} {'backend':<8} {'ms/call':>9} {'probability':>14}")
    timings = {}
    for name, prob in problems.items():
        for backend in backends:
            p, _ = mvn_prob(prob, backend=backend)
            dt = time_call(lambda: mvn_prob(prob, backend=backend))
            timings[(name, backend)] = dt
            print(f"{name:<22} {backend:<8} {dt * 1e3:>9.3f} {p:>14.9f}")
    if HAVE_NUMBA:
        for name in problems:
            speedup = timings[(name, "numpy")] / timings[(name, "numba")]
            print(f"{name}: numba speedup x{speedup:.1f}")

    R = equicorrelation(3, 0.9)
    for backend in backends:
        t0 = time.perf_counter()
        c = equicoordinate_quantile(R, 0.95, backend=backend)
        dt = time.perf_counter() - t0
        print(f"quantile search (M=3) {backend:<8} {dt * 1e3:>9.1f} ms  c={c:.6f}")


if __name__ == "__main__":
    main()
