"""Compare the numba and numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n 250]

Each kernel is timed on identical inputs under both backends (numba is
warmed up first so compilation is excluded) and the outputs are checked to
agree.  A full 1d chain is timed under each backend in a subprocess since
the backend is fixed at import.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from dpscreen.kernels import available_backends, get_backend


def _inputs(n, rng):
    x = rng.standard_normal(n)
    xy = rng.standard_normal((n, 2))
    xy[:, 1] += 0.7 * xy[:, 0]
    lab = rng.integers(0, 12, n)
    lab = np.unique(lab, return_inverse=True)[1].astype(np.int64)
    trace_x = rng.integers(1, 25, (400, n)).astype(np.int64)
    trace_y = rng.integers(1, 25, (400, n)).astype(np.int64)
    return x, xy, lab, trace_x, trace_y


def _cases(n, rng):
    x, xy, lab, tx, ty = _inputs(n, rng)
    u = rng.random(n)
    order = np.arange(n)
    z = np.linspace(-4, 4, 400)
    zz = rng.standard_normal((400, 2))
    w = np.full(10, 0.09)
    means = np.linspace(-2, 2, 10)
    var = np.full(10, 0.3)
    means2 = rng.standard_normal((10, 2))
    covs = np.tile(np.array([[1.0, 0.3], [0.3, 1.0]]), (10, 1, 1))
    return {
        "alloc_sweep_1d": lambda k: k.alloc_sweep_1d(
            x, lab.copy(), u, order, 0.0, 0.01, 1.0, 0.1, 10.0),
        "alloc_sweep_2d": lambda k: k.alloc_sweep_2d(
            xy, lab.copy(), u, order, np.zeros(2), 0.01, 4.0,
            0.4 * np.eye(2), 1.0),
        "mixture_density_1d": lambda k: k.mixture_density_1d(
            z, w, means, var, 0.1, 3.0, 0.0, 1.0, np.zeros(z.size)),
        "mixture_density_2d": lambda k: k.mixture_density_2d(
            zz, w, means2, covs, 0.1, 3.0, np.zeros(2), np.eye(2),
            np.zeros(zz.shape[0])),
        "trace_log_bf": lambda k: k.trace_log_bf(tx, ty, 0.5, False),
        "knn_counts": lambda k: k.knn_counts(x, xy[:, 1], 20),
    }


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _same(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(p, q, rtol=1e-9, atol=1e-12) for p, q in zip(a, b))


def bench_kernels(n, repeat):
    backends = available_backends()
    rows = []
    for name, call in _cases(n, np.random.default_rng(1)).items():
        times, outs = {}, {}
        for b in backends:
            mod = get_backend(b)
            outs[b] = call(mod)  # warm-up / compile
            times[b] = _time(lambda: call(mod), repeat)
        agree = _same(*outs.values()) if len(outs) > 1 else True
        rows.append((name, times, agree))
    return backends, rows


_CHAIN = """
import time, numpy as np
from dpscreen import dpm
x = np.random.default_rng(0).standard_normal({n})
cfg = dpm.ctbf_marginal_config()
dpm.run_chain(x[:20], cfg, dpm.McmcSettings(5, 5, 1), rng=0)
t0 = time.perf_counter()
dpm.run_chain(x, cfg, dpm.McmcSettings({burn}, {save}, 5), rng=0)
print(time.perf_counter() - t0)
"""


def bench_chain(backend, n, burn, save):
    env = dict(os.environ, DPSCREEN_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", _CHAIN.format(
        n=n, burn=burn, save=save)], env=env, capture_output=True, text=True,
        check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=250)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sweeps", type=int, default=2000,
                    help="sweeps in the end-to-end chain timing")
    args = ap.parse_args()

    backends, rows = bench_kernels(args.n, args.repeat)
    head = "%-20s" % "kernel" + "".join("%12s" % b for b in backends)
    print(head + "%10s%8s" % ("speedup", "agree"))
    for name, times, agree in rows:
        line = "%-20s" % name + "".join("%11.2fms" % (1e3 * times[b])
                                        for b in backends)
        if len(backends) > 1:
            line += "%9.1fx" % (times["numpy"] / times["numba"])
        print(line + "%8s" % ("yes" if agree else "NO"))

    burn = args.sweeps // 10
    save = (args.sweeps - burn) // 5
    print("\n1d chain, n=%d, %d sweeps:" % (args.n, burn + 5 * save))
    for b in backends:
        print("  %-6s %8.2fs" % (b, bench_chain(b, args.n, burn, save)))


if __name__ == "__main__":
    main()
