"""Benchmark the compiled kernel core against the numpy fallback.

Raw kernels are timed in-process (both backends importable side by side);
the end-to-end rows re-run this script in a subprocess with
DOTSEG_KERNELS pinned, because the backend is chosen at import time.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np


def bench(fn, repeats):
    best = min(timeit.repeat(fn, number=1, repeat=repeats))
    return best * 1e3  # ms


def raw_kernel_table(repeats):
    from dotseg._kernels import pyref
    try:
        from dotseg._kernels import _core
    except ImportError:
        print("extension not built; raw comparison skipped")
        return
    rng = np.random.default_rng(0)
    x = rng.standard_normal((64, 128, 128)).astype(np.float32)
    cols = rng.standard_normal((64 * 9, 128 * 128)).astype(np.float32)
    dy = rng.standard_normal((64, 64, 64)).astype(np.float32)
    _, idx = pyref.maxpool2x2(x)
    cases = [
        ("im2col3x3  64x128x128", lambda m: m.im2col3x3(x)),
        ("col2im3x3  64x128x128", lambda m: m.col2im3x3(cols, 128, 128)),
        ("maxpool2x2 64x128x128", lambda m: m.maxpool2x2(x)),
        ("pool scatter 64x64x64", lambda m: m.maxpool2x2_scatter(dy, idx,
                                                                 128, 128)),
    ]
    print(f"{'kernel':<24}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, call in cases:
        t_py = bench(lambda: call(pyref), repeats)
        t_cy = bench(lambda: call(_core), repeats)
        print(f"{name:<24}{t_py:>10.2f}{t_cy:>11.2f}{t_py / t_cy:>9.2f}x")


def end_to_end(backend, repeats):
    """Forward + backward of the default-scale net, timed in-process."""
    from dotseg.grad import loss_and_grads
    from dotseg.losses import FrwConfig, LossWeights
    from dotseg.network import forward, new_model

    model = new_model(depth=4, width=32, seed=0)
    rng = np.random.default_rng(1)
    image = rng.random((1, 3, 128, 128), dtype=np.float32)
    gt = rng.integers(0, 2, (128, 128)).astype(np.uint8)
    fwd = bench(lambda: forward(model, image), repeats)
    bwd = bench(lambda: loss_and_grads(model, image, gt, gt, gt,
                                       LossWeights(), FrwConfig()), repeats)
    print(f"{'forward D=4 W=32 128px':<24}{backend:>8}{fwd:>12.1f} ms")
    print(f"{'fwd+bwd D=4 W=32 128px':<24}{backend:>8}{bwd:>12.1f} ms")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--end-to-end-backend", default=None,
                        help=argparse.SUPPRESS)  # subprocess entry
    args = parser.parse_args()
    if args.end_to_end_backend:
        end_to_end(args.end_to_end_backend, args.repeats)
        return
    raw_kernel_table(args.repeats)
    print()
    sys.stdout.flush()
    for backend in ("numpy", "cython"):
        env = dict(os.environ, DOTSEG_KERNELS=backend)
        subprocess.run([sys.executable, __file__,
                        "--end-to-end-backend", backend,
                        "--repeats", str(args.repeats)], env=env, check=True)


if __name__ == "__main__":
    main()
