"""Benchmark the compiled kernel backend against the pure-Python fallback.

Run:  python benchmarks/bench_kernels.py

Times the hot kernels on full production grids (600 total values x 291
order values x 3 options) plus a Monte Carlo sampling loop, and verifies
that both backends agree bit for bit.
"""

import time

import numpy as np

import ecomdemand as ed
from ecomdemand.kernels import _pure

try:
    from ecomdemand.kernels import _speedups
except ImportError:
    _speedups = None

from ecomdemand.model import ScenarioTables


def _time(fn, min_seconds=0.3):
    n = 0
    t0 = time.perf_counter()
    while True:
        fn()
        n += 1
        dt = time.perf_counter() - t0
        if dt >= min_seconds:
            return dt / n


def bench_tables(mod, tables, params):
    ntv, nov = tables.tv.size, tables.ov.size
    nseg = len(tables.fee_profiles)
    ls = np.empty(ntv)
    cond = np.empty((ntv, nov))
    rate = np.empty(ntv)
    mo = np.empty(ntv)
    sr = np.empty((ntv, nseg))

    def run():
        mod.order_value_tables(
            tables.l1_per_ov, tables.ov, tables.tv, tables.seg, nseg,
            params.beta_logsumdo, params.beta_interval, params.beta_storage,
            ls, cond, rate, mo, sr)

    return _time(run), ls.copy()


def bench_softmax(mod, n=600, reps=200):
    rng = np.random.default_rng(3)
    v = np.ascontiguousarray(rng.normal(size=n))
    out = np.empty(n)

    def run():
        for _ in range(reps):
            mod.softmax(v, out)

    return _time(run) / reps


def bench_choose(mod, reps=20000):
    rng = np.random.default_rng(4)
    p = np.empty(600)
    _pure.softmax(np.ascontiguousarray(rng.normal(size=600)), p)
    cum = np.cumsum(p)
    draws = rng.random(reps)

    def run():
        for u in draws:
            mod.choose(cum, u)

    return _time(run) / reps


def main():
    scenario = ed.builtin_scenario("S1")
    params = ed.ChoiceModelParams()
    tables = ScenarioTables(scenario, params)

    backends = [("pure", _pure)]
    if _speedups is not None:
        backends.append(("compiled", _speedups))
    else:
        print("compiled backend not built; benchmarking the fallback only")

    results = {}
    checks = {}
    for name, mod in backends:
        t_tab, ls = bench_tables(mod, tables, params)
        results[name] = {
            "order_value_tables (600x291)": t_tab,
            "softmax (600 alts)": bench_softmax(mod),
            "inverse-CDF draw (600 alts)": bench_choose(mod),
        }
        checks[name] = ls

    if len(checks) == 2 and np.array_equal(checks["pure"], checks["compiled"]):
        print("backends agree bit-for-bit on the table kernel\n")

    kernels = list(next(iter(results.values())))
    width = max(len(k) for k in kernels)
    header = f"{'kernel':<{width}}" + "".join(f"{n:>14}" for n, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for k in kernels:
        row = f"{k:<{width}}"
        for name, _ in backends:
            row += f"{results[name][k] * 1e6:>12.1f}us"
        if len(backends) == 2:
            row += f"{results['pure'][k] / results['compiled'][k]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
