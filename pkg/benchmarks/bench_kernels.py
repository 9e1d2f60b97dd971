"""Benchmark the compiled convolution core against the pure-NumPy fallback.

Runs the three hot kernels on the layer shapes the 2D networks actually use
during training on 140x196 grids, times both backends, and checks that their
outputs agree bitwise. Run as:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import importlib
import sys
import time

import numpy as np

from wsdn.kernels import _fallback

try:
    from wsdn.kernels import _core
except ImportError:
    _core = None

# (label, in_channels, out_channels, height, width) as used by the deepest
# and the widest layers of the 2D models
SHAPES = [
    ("conv1 full-res 1->8", 1, 8, 140, 196),
    ("conv2 full-res 8->8", 8, 8, 140, 196),
    ("conv3 half-res 9->16", 9, 16, 70, 98),
    ("conv5 full-res 34->8", 34, 8, 140, 196),
]


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _bench_case(label, cin, cout, h, w, repeats):
    rng = np.random.default_rng(0)
    inp = rng.normal(size=(cin, h, w))
    kernel = rng.normal(size=(cout, cin, 3, 3))
    bias = rng.normal(size=cout)
    grad = rng.normal(size=(cout, h, w))

    rows = []
    for name, args, backends in [
        ("forward", (inp, kernel, bias),
         (_core.conv3x3_forward if _core else None, _fallback.conv3x3_forward)),
        ("backward_input", (grad, kernel),
         (_core.conv3x3_backward_input if _core else None,
          _fallback.conv3x3_backward_input)),
        ("backward_weights", (grad, inp),
         (_core.conv3x3_backward_weights if _core else None,
          _fallback.conv3x3_backward_weights)),
    ]:
        compiled_fn, fallback_fn = backends
        t_fallback = _time(lambda: fallback_fn(*args), repeats)
        if compiled_fn is None:
            rows.append((label, name, None, t_fallback, None, True))
            continue
        t_compiled = _time(lambda: compiled_fn(*args), repeats)
        got, want = compiled_fn(*args), fallback_fn(*args)
        if not isinstance(got, tuple):
            got, want = (got,), (want,)
        same = all(a.tobytes() == b.tobytes() for a, b in zip(got, want))
        rows.append(
            (label, name, t_compiled, t_fallback, t_fallback / t_compiled, same)
        )
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)

    if _core is None:
        print("compiled core unavailable; timing the fallback only")
    header = f"{'layer':24} {'kernel':18} {'compiled':>10} {'fallback':>10} {'speedup':>8}  bitwise"
    print(header)
    print("-" * len(header))
    all_equal = True
    for shape in SHAPES:
        for label, name, tc, tf, speedup, same in _bench_case(*shape, args.repeats):
            all_equal &= same
            tc_s = f"{tc * 1e3:8.2f}ms" if tc is not None else "       n/a"
            sp_s = f"{speedup:7.1f}x" if speedup is not None else "     n/a"
            print(f"{label:24} {name:18} {tc_s} {tf * 1e3:8.2f}ms {sp_s}  {'ok' if same else 'MISMATCH'}")
    if not all_equal:
        print("\nbackends disagree", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
