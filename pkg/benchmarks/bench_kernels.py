"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run with::

    python benchmarks/bench_kernels.py [--repeats 5]

Each kernel is timed on a workload shaped like what the layered estimator
actually does per outer iteration (mixture evaluation over a few thousand
banked points, batched t log densities, paired likelihoods). The numba
column includes a warm-up call so compilation time is excluded.
"""

import argparse
import time

import numpy as np

from focusedeig import _kernels as K

rng = np.random.default_rng(0)


def _spd(p):
    a = rng.standard_normal((p, p))
    return a @ a.T + 0.5 * np.eye(p)


def workloads():
    p, n_y = 4, 4
    ell = 6000          # banked points per iteration
    comps = 24          # pruned mixture size
    m_pairs, n_pairs = 128, 512

    chol = np.linalg.cholesky(_spd(p))
    logdet = 2 * np.sum(np.log(np.diag(chol)))
    mean = rng.standard_normal(p)
    pts = rng.standard_normal((ell, p))

    locs = rng.standard_normal((comps, p))
    chols = np.array([np.linalg.cholesky(_spd(p)) for _ in range(comps)])
    logdets = np.array([2 * np.sum(np.log(np.diag(c))) for c in chols])

    comp_rows = rng.standard_normal((comps, ell)) * 3
    log_counts = np.full(comps, np.log(50.0))
    prior_lp = rng.standard_normal(ell) - 4

    y1 = rng.standard_normal(n_y)
    g1 = rng.standard_normal((ell, n_y))
    y2 = rng.standard_normal((n_pairs, n_y))
    g2 = rng.standard_normal((n_pairs, m_pairs, n_y))

    w = rng.random(ell)
    w /= w.sum()

    return {
        "mvn_logpdf": (pts, mean, chol, logdet),
        "mvt_logpdf": (pts, mean, chol, logdet, 2.5),
        "iso_loglike": (y1, g1, 0.4),
        "iso_loglike_pairs": (y2, g2, 0.4),
        "logsumexp_rows": (rng.standard_normal((n_pairs, m_pairs)),),
        "mixture_logpdf": (comp_rows, log_counts, prior_lp, np.log(500.0)),
        "weighted_moments": (pts, w),
        "tstack_logpdf_point": (locs, chols, logdets, 2.5, pts[0]),
        "tstack_logpdf_points": (locs, chols, logdets, 2.5, pts),
        "lorentzian": (
            rng.standard_normal(ell),
            np.exp(rng.standard_normal(ell) * 0.3),
            np.exp(rng.standard_normal(ell) * 0.3),
            np.exp(1 + rng.standard_normal(ell) * 0.2),
            np.array([-1.3, 0.0, 1.3]),
        ),
    }


def bench(fn, args, repeats):
    fn(*args)  # warm up (and trigger compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not K.USING_NUMBA:
        print("numba backend unavailable (FOCUSEDEIG_BACKEND=numpy?); "
              "timing the numpy path only")

    loads = workloads()
    print(f"{'kernel':<22} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name in K.KERNEL_NAMES:
        np_fn = getattr(K, name + "_numpy")
        nb_fn = getattr(K, name + "_numba")
        t_np = bench(np_fn, loads[name], args.repeats)
        if nb_fn is None:
            print(f"{name:<22} {t_np * 1e6:>10.1f}us {'-':>12} {'-':>9}")
            continue
        t_nb = bench(nb_fn, loads[name], args.repeats)
        print(
            f"{name:<22} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
            f"{t_np / t_nb:>8.1f}x"
        )


if __name__ == "__main__":
    main()
