"""Time each numba kernel against its pure-numpy twin.

Run as ``python3 benchmarks/bench_kernels.py``. Both twins are always
importable, so the comparison runs in one process regardless of the
ROBUSTUTIL_NO_NUMBA setting; when numba is unavailable (or disabled) the
"_nb" column degenerates to interpreted Python and the table says so.
Inputs are seeded and sized like the hot paths in the solver (quadrature
markets of 64+ states, lattice sweeps at 1e-3 steps).
"""
import argparse
import time

import numpy as np

from robustutil import _kernels as K


def best_of(fn, args, repeats, number):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def build_cases(rng):
    n = 4096
    p = rng.dirichlet(np.ones(n))
    v = rng.normal(size=n)
    hmat = rng.normal(size=(2, n))
    a = np.array([0.1, -0.2])
    g = np.array([0.3, 0.15])

    big_n = 1000
    obj3 = np.cumsum(rng.uniform(0.01, 1.0, size=(3, big_n + 1)), axis=1)
    h3 = rng.normal(size=(2, 3))
    ctbl3 = h3[:, :, None] * (np.arange(big_n + 1) / big_n)[None, None, :]
    ath3 = np.array([-10.0, -10.0])

    zu = np.cumsum(rng.uniform(size=(3, 3, 401)), axis=2)

    nc = 64
    pc = rng.dirichlet(np.ones(nc))
    zmat = rng.uniform(0.2, 3.0, size=(3, nc))
    zmat /= (zmat @ pc)[:, None]

    npg, mpg = 6, 2
    ppg = rng.dirichlet(np.ones(npg) * 2.0)
    hpg = rng.normal(size=(mpg, npg))
    apg = hpg @ ppg - 0.1
    is_eq = np.zeros(mpg, dtype=bool)
    starts = rng.dirichlet(np.ones(npg), size=64) / ppg

    return [
        ("kahan_dot (n=4096)",
         K.kahan_dot_nb, K.kahan_dot_np, (p, v), 200),
        ("power_dual_objective (n=4096, m=2)",
         K.power_dual_objective_nb, K.power_dual_objective_np,
         (p, hmat, a, g, 1.2, 1.0, 0.5), 100),
        ("primal_grid_min n=3 (N=1000)",
         K.primal_grid_min_n3_nb, K.primal_grid_min_n3_np,
         (obj3, ctbl3, ath3, big_n), 5),
        ("minimax_x_grid n=3 (k=3, N=400)",
         K.minimax_x_grid_n3_nb, K.minimax_x_grid_n3_np, (zu, 400), 5),
        ("power_core_scan k=3 (n=64, N=256)",
         K.power_core_scan_k3_nb, K.power_core_scan_k3_np,
         (zmat, pc, 2.0, 256), 5),
        ("primal_pg_power (n=6, m=2, 64 starts)",
         K.primal_pg_power_nb, K.primal_pg_power_np,
         (ppg, hpg, apg, is_eq, 1.0, 0.5, starts, 150, 12), 1),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cases = build_cases(rng)

    if K.NUMBA_ENABLED:
        print("numba backend: enabled (jit warm-up excluded from timings)")
    else:
        print("numba backend: DISABLED; the _nb column is interpreted "
              "Python, expect it to lose")
    print(f"{'kernel':<38} {'numba':>10} {'numpy':>10} {'speedup':>8}")

    for name, fn_nb, fn_np, case_args, number in cases:
        fn_nb(*case_args)  # trigger compilation outside the clock
        fn_np(*case_args)
        t_nb = best_of(fn_nb, case_args, args.repeats, number)
        t_np = best_of(fn_np, case_args, args.repeats, number)
        print(f"{name:<38} {t_nb * 1e3:>8.3f}ms {t_np * 1e3:>8.3f}ms "
              f"{t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
