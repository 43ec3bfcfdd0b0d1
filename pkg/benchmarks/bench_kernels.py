"""Compare the compiled kernel extension against the pure-Python fallback.

Both backends are imported directly (bypassing the import-time selection)
and timed on the workloads the rest of the package actually runs: special
function tails behind the test p-values, normal quantiles behind null
residual generation, and the Poisson-binomial tail behind visual p-values.

Run as: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import statistics
import time

import numpy as np

from lineupdx.kernels import pure

try:
    from lineupdx.kernels import _speedups as compiled
except ImportError:
    compiled = None


def _time_call(fn, args, inner: int, repeats: int) -> float:
    """Median seconds per call over `repeats` timed batches."""
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best.append((time.perf_counter() - t0) / inner)
    return statistics.median(best)


def workloads():
    rng = np.random.default_rng(7)
    quantiles = rng.uniform(0.001, 0.999, 256)
    probs_small = [0.05] * 5
    probs_large = list(rng.uniform(0.01, 0.5, 40))
    return [
        ("reg_gamma_q(8.5, 11.0)", "reg_gamma_q", (8.5, 11.0), 2000),
        ("reg_beta(1.5, 48.0, 0.97)", "reg_beta", (1.5, 48.0, 0.97), 2000),
        ("normal_sf(1.644)", "normal_sf", (1.644,), 5000),
        ("normal_ppf(0.975)", "normal_ppf", (0.975,), 5000),
        ("normal_ppf_vec(256 probs)", "normal_ppf_vec", (quantiles,), 200),
        ("poisson_binomial_tail(5 judges)", "poisson_binomial_tail",
         (probs_small, 2), 2000),
        ("poisson_binomial_tail(40 judges)", "poisson_binomial_tail",
         (probs_large, 10), 500),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7,
                        help="timed batches per workload (median is kept)")
    args = parser.parse_args()

    if compiled is None:
        print("compiled extension not built; timing the pure backend only")

    name_w = max(len(w[0]) for w in workloads())
    header = f"{'workload':<{name_w}}  {'pure':>12}  {'compiled':>12}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, fname, call_args, inner in workloads():
        t_pure = _time_call(getattr(pure, fname), call_args, inner,
                            args.repeats)
        row = f"{label:<{name_w}}  {t_pure * 1e6:>10.2f}us"
        if compiled is not None:
            t_comp = _time_call(getattr(compiled, fname), call_args, inner,
                                args.repeats)
            row += f"  {t_comp * 1e6:>10.2f}us  {t_pure / t_comp:>7.1f}x"
            got = getattr(compiled, fname)(*call_args)
            want = getattr(pure, fname)(*call_args)
            if not np.allclose(got, want, rtol=1e-12, atol=1e-300):
                row += "  MISMATCH"
        print(row)


if __name__ == "__main__":
    main()
