"""Timing comparison of the jit-compiled kernels against the plain numpy
fallbacks. Run with:

    python3 benchmarks/bench_kernels.py

The package selects the implementation at import time from the CAEDP_NUMBA
environment variable; this script calls both variants directly so one run
covers the pair.
"""

import time

import numpy as np

from caedp import kernels as kn


def timeit(fn, *args, repeat=20):
    fn(*args)  # warm-up (includes jit compilation for the numba variants)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    n, K, L, M = 1200, 15, 15, 15
    ll_theta = rng.normal(-2.0, 1.0, (n, L))
    ll_phi = rng.normal(-1.5, 1.0, (n, M))
    lw_theta = np.log(rng.dirichlet(np.ones(L), size=K))
    lw_phi = np.log(rng.dirichlet(np.ones(M), size=(K, L)))
    k_of_ind = rng.integers(0, K, size=n)
    logp = rng.normal(0.0, 2.0, (n, K))
    u = rng.random(n)
    w = rng.dirichlet(np.ones(L))
    means = rng.normal(0.0, 2.0, (n, L))
    sds = rng.random(L) + 0.5
    uu = rng.random(n)

    cases = [
        ("cluster scores", kn._individual_cluster_scores_np,
         kn._individual_cluster_scores_nb,
         (ll_theta, ll_phi, lw_theta, lw_phi)),
        ("outcome-class logprobs", kn._y_class_logprobs_np,
         kn._y_class_logprobs_nb,
         (ll_theta, ll_phi, lw_theta, lw_phi, k_of_ind)),
        ("categorical rows", kn._sample_rows_np, kn._sample_rows_nb,
         (logp, u)),
        ("mixture cdf", kn._mixture_cdf_np, kn._mixture_cdf_nb,
         (rng.normal(0, 3, n), w, means, sds)),
        ("cdf inversion", kn._invert_mixture_cdf_np,
         kn._invert_mixture_cdf_nb, (uu, w, means, sds, 1e-8)),
    ]

    print(f"{'kernel':<24}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, f_np, f_nb, args in cases:
        t_np = timeit(f_np, *args)
        if kn._HAVE_NUMBA:
            t_nb = timeit(f_nb, *args)
            print(f"{name:<24}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
                  f"{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<24}{t_np * 1e3:>10.2f}ms{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
