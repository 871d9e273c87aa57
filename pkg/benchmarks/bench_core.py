"""Time the compiled inner loops against the pure-Python fallback.

Usage: python benchmarks/bench_core.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from modelhop import _pycore

try:
    from modelhop import _core
except ImportError:
    _core = None


def cases(rng):
    k = 40
    A = rng.standard_normal((k + 10, k))
    L = np.ascontiguousarray(np.linalg.cholesky(A.T @ A))
    x = rng.standard_normal(k)
    scores = rng.normal(0, 5, 500)
    S = rng.standard_normal((12, 12))
    row_base = (rng.random(12) < 0.3).astype(np.uint8)
    col_base = (rng.random(12) < 0.3).astype(np.uint8)
    free_axis = np.array([0, 0, 0, 1, 1, 1, 1, 0], dtype=np.int8)
    free_idx = np.array([1, 4, 7, 2, 5, 8, 10, 11], dtype=np.intp)
    prob = rng.uniform(0.2, 0.8, 8)
    return {
        "chol_update k=40": lambda m: m.chol_update(L.copy(), x.copy()),
        "select_index n=500": lambda m: m.select_index(scores, 0.37),
        "subset_grid_lse 12x12, 8 free": lambda m: m.subset_grid_lse(S, row_base, col_base,
                                                                     free_axis, free_idx, prob),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'kernel':32s} {'compiled us':>12s} {'python us':>12s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        row = []
        for mod in (_core, _pycore):
            t = timeit.Timer(lambda: fn(mod))
            n, _ = t.autorange()
            row.append(min(t.repeat(args.repeat, n)) / n * 1e6)
        print(f"{name:32s} {row[0]:12.2f} {row[1]:12.2f} {row[1] / row[0]:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
