"""
Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Compilation happens in a warm-up call and is not timed.
"""

import argparse
import timeit

import numpy as np

from archrep import kernels
from archrep._jit import HAS_NUMBA
from archrep.rng import make_rng


def cases():
    rng = make_rng(1)
    a = np.array([0.3, 0.2])
    eps_batch = rng.standard_normal((200, 2100))
    n = 4000
    res = rng.standard_normal(n)
    phi = rng.random((n, 2))
    xs = np.sort(rng.standard_normal(64))
    w = rng.standard_normal(n)
    g = np.sort(rng.random(n))
    S = np.cumsum(rng.choice([-1.0, 1.0], size=(2000, 1025)), axis=1)
    return {
        "arch_recursion (200 x 2100, p=2)": (kernels._arch_recursion_np, kernels._arch_recursion_nb,
                                            (a, eps_batch, 100)),
        "rep_values (n=4000, q=2, m=64)": (kernels._rep_values_np, kernels._rep_values_nb,
                                          (res, phi, xs)),
        "step_sup_inf (n=4000)": (kernels._step_sup_inf_np, kernels._step_sup_inf_nb, (w, g, 1.5)),
        "max_min_partial (2000 x 1025)": (kernels._max_min_partial_np, kernels._max_min_partial_nb,
                                          (S,)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("numba not installed; nothing to compare")
        return
    print(f"{'kernel':36s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb, fargs) in cases().items():
        f_nb(*fargs)
        t_np = min(timeit.repeat(lambda: f_np(*fargs), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: f_nb(*fargs), number=1, repeat=args.repeat))
        print(f"{name:36s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {t_np / t_nb:8.1f}")


if __name__ == "__main__":
    main()
