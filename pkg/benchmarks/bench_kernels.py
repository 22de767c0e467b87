"""Compare the compiled and pure-Python coordinate-descent kernels.

    python benchmarks/bench_kernels.py [--sizes 100 200 400] [--repeat 3]

For each size the Lasso kernel solves one penalised least-squares problem and
the decorrelator kernel builds a full p x p matrix; both backends get the same
inputs and the script checks that their outputs agree.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from fcd._backend import compiled_available, get_kernels
from fcd.debias import default_mu, empirical_covariance


def _problem(n, p, seed=0):
    r = np.random.default_rng(seed)
    idx = np.arange(p)
    L = np.linalg.cholesky(0.3 ** np.abs(idx[:, None] - idx[None, :]))
    X = r.standard_normal((n, p)) @ L.T
    theta = np.zeros(p)
    theta[: max(1, p // 20)] = 1.0
    y = X @ theta + r.standard_normal(n)
    return empirical_covariance(X), X.T @ y / n


def _best(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def run(sizes, repeat, mu_a):
    backends = ["python"] + (["cython"] if compiled_available() else [])
    print(f"{'kernel':<13}{'p':>6}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max diff':>11}")
    for p in sizes:
        n = max(2 * p // 3, 10)
        S, b = _problem(n, p)
        lam = 0.5 * math.sqrt(2 * math.log(p) / n)
        mu = default_mu(n, p, mu_a)

        def lasso(k):
            x = np.zeros(p)
            get_kernels(k).cd_quadratic_l1(S, b, lam, x, 1e-8, 10_000)
            return x

        def decor(k):
            return get_kernels(k).cd_decorrelator(S, mu, 1e-9, 5_000)[0]

        for name, fn in (("lasso", lasso), ("decorrelator", decor)):
            res = {k: _best(lambda k=k: fn(k), repeat) for k in backends}
            line = f"{name:<13}{p:>6}" + "".join(f"{res[k][0] * 1e3:>10.2f}ms" for k in backends)
            if len(backends) == 2:
                speed = res["python"][0] / res["cython"][0]
                diff = float(np.abs(res["python"][1] - res["cython"][1]).max())
                line += f"{speed:>9.1f}x{diff:>11.1e}"
            print(line)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200, 400])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--mu-a", type=float, default=0.7,
                    help="decorrelator level; values below 2 give non-trivial rows")
    a = ap.parse_args(argv)
    run(a.sizes, a.repeat, a.mu_a)


if __name__ == "__main__":
    main()
