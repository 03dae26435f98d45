"""Compare the compiled kernels against the pure-numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. Sizes mirror the shapes
the training loop actually touches (batch x hidden activations and the
input-layer weight matrix).
"""

import time

import numpy as np

from altdebias import _kernels_py

try:
    from altdebias import _kernels_c
except ImportError:
    _kernels_c = None

SIZES = {
    "hidden activations (256 x 100)": 256 * 100,
    "input weights (2352 x 100)": 2352 * 100,
    "large (1M)": 1_000_000,
}
REPEATS = 200


def bench(fn, *arrays):
    fn(*arrays)  # warm up
    start = time.perf_counter()
    for _ in range(REPEATS):
        fn(*arrays)
    return (time.perf_counter() - start) / REPEATS


def run(impl, size, dtype):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal(size), dtype=dtype)
    out = np.empty_like(x)
    grad = np.ascontiguousarray(rng.standard_normal(size), dtype=dtype)
    acc = np.zeros_like(x)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    return {
        "relu_fwd": bench(impl.relu_forward, x, out),
        "relu_bwd": bench(impl.relu_backward, x, grad, acc),
        "sigmoid": bench(impl.sigmoid_forward, x, out),
        "adam": bench(lambda p, g, mm, vv: impl.adam_update(
            p, g, mm, vv, 1e-3, 0.9, 0.999, 1e-8, 1), x, grad, m, v),
    }


def main():
    if _kernels_c is None:
        print("compiled kernels not built; nothing to compare")
        return
    for dtype in (np.float32, np.float64):
        print(f"\n== dtype {np.dtype(dtype).name} ==")
        for label, size in SIZES.items():
            py = run(_kernels_py, size, dtype)
            cy = run(_kernels_c, size, dtype)
            print(f"  {label}")
            for name in py:
                speedup = py[name] / cy[name]
                print(f"    {name:9s} python {py[name] * 1e6:9.1f} us   "
                      f"cython {cy[name] * 1e6:9.1f} us   "
                      f"speedup {speedup:5.2f}x")


if __name__ == "__main__":
    main()
