"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times each hot kernel and one end-to-end CR-PSGD run per backend and checks
that both backends return the same numbers.
"""

import argparse
import time
import warnings

import numpy as np

from crpsgd import kernels
from crpsgd.algorithms import CrPsgdConfig, cr_psgd, psgd_baseline
from crpsgd.executor import WorkerPool
from crpsgd.objectives import AdditiveGaussianOracle, LogisticOracle, generate_logistic_instance, isotropic_quadratic


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((1000, 50))
    y = np.where(rng.random(1000) < 0.5, -1.0, 1.0)
    x = 0.1 * rng.standard_normal(50)
    prob = generate_logistic_instance(50, 10, 1000, 0.001, seed=1)
    quad = isotropic_quadratic(10)
    return {
        "gaussian_sum 1e6x10": lambda k: k.gaussian_sum(1, 0, 0, 100_000, 100),
        "sample_indices 1e6": lambda k: k.sample_indices(1, 0, 0, 0, 1_000_000, 1000),
        "logistic_grad_sum 2e5, d=50": lambda k: k.logistic_grad_sum(Z, y, x, 1, 0, 0, 200_000),
        "cr-psgd logistic (N=10, T=1e4)": lambda k: cr_psgd(
            LogisticOracle(prob, backend=k.NAME), CrPsgdConfig(10, 10_000, np.zeros(50), 2, 1.1, 0.1),
            WorkerPool(10), record=False)[0],
        "psgd quadratic (N=4, T=2e4, B=2)": lambda k: psgd_baseline(
            AdditiveGaussianOracle(quad, 1.0, backend=k.NAME), 4, 20_000, np.ones(10), 2, 0.1,
            WorkerPool(4), record=False)[0],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    warnings.simplefilter("ignore")
    names = kernels.available_backends()
    print(f"backends: {', '.join(names)}")
    if "cython" not in names:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'case':<34}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}{'max |diff|':>13}")
    for label, fn in cases().items():
        secs, outs = {}, {}
        for n in names:
            secs[n], outs[n] = best_of(lambda: fn(kernels.get_backend(n)), args.repeat)
        line = f"{label:<34}" + "".join(f"{secs[n]:>11.3f}s" for n in names)
        if len(names) == 2:
            diff = float(np.max(np.abs(np.asarray(outs["cython"], float) - np.asarray(outs["python"], float))))
            line += f"{secs['python'] / secs['cython']:>9.2f}x{diff:>13.2e}"
        print(line)


if __name__ == "__main__":
    main()
