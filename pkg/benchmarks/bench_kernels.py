"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeats 3] [--seed 0]

Each kernel runs on identical inputs under both backends; outputs are
checked for equality before timings are reported.
"""

import argparse
import time

import numpy as np

from memetrap import _kernels
from memetrap.synthgen import PlantedPartitionSpec, gen_network


def best_of(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(seed):
    rng = np.random.default_rng(seed)
    net, _ = gen_network(PlantedPartitionSpec(n=1000, k=10, p_in=0.1, p_out=0.002, seed=seed))
    U = rng.random((500, 3))
    X = rng.random((1000, 7))
    y = (X[:, 2] + 0.3 * rng.random(1000) > 0.8).astype(np.int64)
    w = np.bincount(rng.integers(0, 1000, 1000), minlength=1000).astype(np.int64)
    feats = np.array([0, 2, 3, 5], dtype=np.int64)
    Q = rng.random((5000, 7))
    return {
        "cascade_walk (500 events)": lambda k: k.cascade_walk(net.indptr, net.indices, net.n, U, 0.85, -1),
        "cascade_argmax (500 events)": lambda k: k.cascade_argmax(net.indptr, net.indices, net.n, U, 0.85, -1),
        "fit_tree (1000 x 4)": lambda k: k.fit_tree(X, y, w, feats, 0, seed),
        "predict_tree (5000 rows)": lambda k: k.predict_tree(Q, *_kernels.python_backend.fit_tree(X, y, w, feats)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    py, cy = _kernels.python_backend, _kernels.compiled_backend
    if cy is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':<30}{'python s':>12}{'compiled s':>12}{'speedup':>10}")
    for name, fn in cases(args.seed).items():
        tp, out_p = best_of(lambda: fn(py), args.repeats)
        tc, out_c = best_of(lambda: fn(cy), args.repeats)
        out_p = out_p if isinstance(out_p, tuple) else (out_p,)
        out_c = out_c if isinstance(out_c, tuple) else (out_c,)
        assert all(np.array_equal(a, b) for a, b in zip(out_p, out_c)), f"{name}: backends disagree"
        print(f"{name:<30}{tp:>12.4f}{tc:>12.5f}{tp / tc:>9.0f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
