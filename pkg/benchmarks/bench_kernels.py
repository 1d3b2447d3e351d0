"""Compiled vs pure-numpy kernel timings.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs in both backends; outputs are checked
for bit equality before timing.
"""
import argparse
import timeit

import numpy as np

from depsketch._kernels import _pure

try:
    from depsketch._kernels import _core
except ImportError:
    _core = None


def cases(rng):
    innov = rng.standard_normal((4096, 64))
    f0 = rng.standard_normal(4096)
    z = rng.standard_normal((2048, 256))
    eta = rng.standard_normal((2048, 256))
    u = rng.random((512, 64, 4))
    rows = _pure.weighted_subset_rows(u, 32, 1.0)
    signs = rng.choice([-1.0, 1.0], size=rows.shape)
    vec = rng.standard_normal(64)
    return {
        "ar1_filter 4096x64": lambda m: m.ar1_filter(innov, 0.8, f0),
        "modulated_sequence 2048x256 adaptive": lambda m: m.modulated_sequence(z, eta, f0[:2048], 0.8, 0.5, True),
        "modulated_sequence 2048x256 exogenous": lambda m: m.modulated_sequence(z, eta, f0[:2048], 0.8, 0.5, False),
        "weighted_subset_rows 512x64 d=4 n=32": lambda m: m.weighted_subset_rows(u, 32, 1.0),
        "countsketch_apply_batch 512x64 d=4": lambda m: m.countsketch_apply_batch(rows, signs, vec, 32, 0.5),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _core is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        assert _same(fn(_pure), fn(_core)), f"backends disagree on {name}"
        tp = min(timeit.repeat(lambda: fn(_pure), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:42s} {tp:10.2f} {tc:10.2f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
