"""Compare the compiled and pure-Python dynamics kernels.

Run ``python3 benchmarks/bench_kernels.py [--calls N]``.  Prints per-call
timings for both kernels, the speedup, and the max abs difference of their
outputs on the same random states.  The compiled kernel must be built
(``pip install -e . --no-build-isolation``).
"""

import argparse
import timeit

import numpy as np

from plugpull import _kernels_py as py_k
from plugpull.dynamics import FREE, PINNED, ArmParams

try:
    from plugpull import _kernels_c as c_k
except ImportError:
    c_k = None


def states(n, rng):
    out = []
    for _ in range(n):
        eta = rng.uniform([-0.5, -0.5, -np.pi], [0.5, 0.5, np.pi])
        gamma = rng.uniform(-1.0, 1.0, 2)
        out.append((eta, rng.normal(size=3), gamma, rng.normal(size=2)))
    return out


def calls(kernel, geo, chart, sample):
    el = [lambda s=s: kernel.el_terms(chart, s[0], s[1], s[2], s[3], geo) for s in sample]
    att = [lambda s=s: kernel.attitude_model(chart, s[0], s[1], s[2], s[3], np.zeros(2), 20.0,
                                             None, geo) for s in sample]
    return {"el_terms": el, "attitude_model": att}


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    if a is None or b is None:
        return 0.0 if a is b else np.inf
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--calls", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if c_k is None:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")
    geo = ArmParams().kernel_vector()
    sample = states(64, np.random.default_rng(args.seed))
    print(f"{'chart':>6} {'function':>15} {'python us':>10} {'cython us':>10} {'speedup':>8} "
          f"{'max diff':>10}")
    for chart, name in ((FREE, "free"), (PINNED, "pinned")):
        py_calls, c_calls = calls(py_k, geo, chart, sample), calls(c_k, geo, chart, sample)
        for fn in py_calls:
            per = {}
            for label, cs in (("py", py_calls[fn]), ("c", c_calls[fn])):
                reps = max(1, args.calls // len(cs))
                t = timeit.timeit(lambda: [f() for f in cs], number=reps)
                per[label] = t / (reps * len(cs)) * 1e6
            diff = max(max_diff(p(), c()) for p, c in zip(py_calls[fn], c_calls[fn]))
            print(f"{name:>6} {fn:>15} {per['py']:10.2f} {per['c']:10.2f} "
                  f"{per['py'] / per['c']:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
