"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--n 32 64 128] [--repeat 5]

With TWOWELL_NO_NUMBA=1 set the numba column is skipped.
"""
import argparse
import time

import numpy as np

from twowell import kernels
from twowell._accel import USE_NUMBA
from twowell.kernels import TRUNCATED
from twowell.lattice import standard_domain
from twowell.optimize import initialize, perturb
from twowell.wells import make_wells


def best_of(fn, repeat):
    fn()  # warm-up (compilation)
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return min(ts)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    wells = make_wells(np.sqrt(2.0))
    backends = ["numpy"] + (["numba"] if USE_NUMBA else [])
    print(f"{'kernel':<22}{'n':>6}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max|diff|':>12}")
    for n in args.n:
        D = standard_domain(n)
        u = perturb(initialize(D, "affine", wells, 0.5), 0.01, 0, noise=0.05)
        rng = np.random.default_rng(0)
        S = rng.normal(size=(10, 2 * D.n_nodes))
        Y = 1.5 * S + 0.1 * rng.normal(size=S.shape)  # curvature pairs with s.y > 0
        order = np.arange(10)
        g = rng.normal(size=2 * D.n_nodes)
        jobs = {
            "energy+gradient": lambda b: kernels.site_energy(u.P, D.exists, D.node, D.n, wells.a, wells.b, wells.cbar,
                                                             TRUNCATED, True, b),
            "min triangle det": lambda b: kernels.min_triangle_det(u.P, D.tri_plus, D.tri_minus, b),
            "lbfgs two-loop": lambda b: kernels.two_loop(S, Y, order, g, b),
        }
        for name, job in jobs.items():
            times = [best_of(lambda: job(b), args.repeat) for b in backends]
            outs = [job(b) for b in backends]
            if len(outs) == 2:
                a, c = outs
                a = a if isinstance(a, tuple) else (a,)
                c = c if isinstance(c, tuple) else (c,)
                diff = max(float(np.nanmax(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, c) if x is not None)
                extra = f"{times[0] / times[1]:>9.1f}x{diff:>12.1e}"
            else:
                extra = f"{'-':>10}{'-':>12}"
            print(f"{name:<22}{n:>6}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + extra)


if __name__ == "__main__":
    main()
