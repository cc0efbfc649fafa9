"""Benchmark: compiled attention kernel vs the numpy fallback.

Shapes mirror the pinned suite (16x16 grid, 8 feature dims) across memory
sizes from a single entry up to permanent+FIFO pipeline load, plus one
patch-8 configuration.  Run:

    python benchmarks/bench_attention.py
"""

import time

import numpy as np

from revseg import _attention_py

try:
    from revseg import _attention_c
except ImportError:
    _attention_c = None


def bench(fn, q, k, v, t, repeats=30):
    fn(q, k, v, t)  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(q, k, v, t)
    return (time.perf_counter() - t0) / repeats


def main():
    rng = np.random.default_rng(0)
    cases = [
        ("reverse step, 1 entry (16x16 grid)", 256, 256),
        ("forward step, 10 entries", 256, 2560),
        ("sweep step, 7+7 entries", 256, 3584),
        ("patch-8 grid, 10 entries", 64, 640),
    ]
    print(f"{'case':38s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}  max|diff|")
    for name, nq, nm in cases:
        q = rng.standard_normal((nq, 8))
        k = rng.standard_normal((nm, 8))
        v = rng.random(nm)
        t_py = bench(_attention_py.attend, q, k, v, 0.01)
        if _attention_c is None:
            print(f"{name:38s} {t_py * 1e6:8.1f}us   (compiled kernel not built)")
            continue
        t_c = bench(_attention_c.attend, q, k, v, 0.01)
        diff = np.abs(
            _attention_py.attend(q, k, v, 0.01) - _attention_c.attend(q, k, v, 0.01)
        ).max()
        print(
            f"{name:38s} {t_py * 1e6:8.1f}us {t_c * 1e6:8.1f}us {t_py / t_c:7.2f}x  {diff:.2e}"
        )


if __name__ == "__main__":
    main()
