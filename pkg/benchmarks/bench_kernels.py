#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Runs the hot operations (im2col / col2im and the switch-based pooling
forward/backward) on convnet-sized inputs with both backends and reports
wall time plus the speedup. Outputs are cross-checked for exact equality
while timing, so a mismatch fails loudly rather than reporting nonsense.

Usage: python3 benchmarks/bench_kernels.py [--frames N] [--size S]
"""

import argparse
import time
from dataclasses import dataclass

import numpy as np

from rankpool import _kernels


@dataclass
class BenchRow:
    name: str
    seconds_python: float
    seconds_c: float

    @property
    def speedup(self):
        return self.seconds_python / self.seconds_c if self.seconds_c else float("nan")


def _time(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run_benchmarks(frames=100, size=24, channels=20, kernel=5, repeats=5):
    have_c = "c" in _kernels.available_backends()
    py = _kernels.get_backend("python")
    cy = _kernels.get_backend("c") if have_c else None

    rng = np.random.default_rng(0)
    x = rng.normal(size=(frames, size, size, channels))
    maps = rng.normal(size=(frames, size, size))
    oh = ow = size - kernel + 1
    cols = rng.normal(size=(frames * oh * ow, kernel * kernel * channels))
    pooled_grad = rng.normal(size=(frames, size // 2, size // 2, channels))

    ops = {
        "im2col": lambda impl: impl.im2col(x, kernel, kernel),
        "col2im": lambda impl: impl.col2im(cols, frames, size, size, channels, kernel, kernel),
        "pool_max_forward": lambda impl: impl.pool_max_forward(x, 2, 2),
        "pool_shared_argmax": lambda impl: impl.pool_shared_argmax(maps, 2, 2),
    }
    switches_py = py.pool_shared_argmax(maps, 2, 2)
    ops["pool_gather_shared"] = lambda impl: impl.pool_gather_shared(x, switches_py, 2, 2)
    ops["pool_shared_backward"] = lambda impl: impl.pool_shared_backward(
        pooled_grad, switches_py, 2, 2
    )

    rows = []
    for name, op in ops.items():
        t_py, out_py = _time(lambda: op(py), repeats)
        if cy is None:
            rows.append(BenchRow(name=name, seconds_python=t_py, seconds_c=float("nan")))
            continue
        t_cy, out_cy = _time(lambda: op(cy), repeats)
        ref = out_py if isinstance(out_py, tuple) else (out_py,)
        got = out_cy if isinstance(out_cy, tuple) else (out_cy,)
        for r, g in zip(ref, got):
            if not np.array_equal(r, g):
                raise AssertionError(f"backend outputs differ for {name}")
        rows.append(BenchRow(name=name, seconds_python=t_py, seconds_c=t_cy))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=100)
    parser.add_argument("--size", type=int, default=24)
    parser.add_argument("--channels", type=int, default=20)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rows = run_benchmarks(
        frames=args.frames, size=args.size, channels=args.channels, repeats=args.repeats
    )
    print(f"active backend: {_kernels.BACKEND}")
    print(f"{'operation':22s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for row in rows:
        c_txt = f"{row.seconds_c * 1e3:8.2f}ms" if row.seconds_c == row.seconds_c else "     n/a"
        print(
            f"{row.name:22s} {row.seconds_python * 1e3:8.2f}ms {c_txt} "
            f"{row.speedup:7.2f}x"
        )


if __name__ == "__main__":
    main()
