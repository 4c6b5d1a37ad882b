"""Wall-clock comparison of the numba and numpy simulator kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
Both backends run the same layers; outputs are checked for equality.
"""

import argparse
import time

import numpy as np

from cnnaccel.costmodel import HardwareConfig, TilingChoice, default_tiling
from cnnaccel.network import LayerSpec
from cnnaccel.qtensor import QTensor
from cnnaccel.sim import SimMachine, run_layer, HAVE_NUMBA

CASES = [
    (LayerSpec("std_s1", "standard_conv", 32, 32, 4, 32, 3, 1, 1), TilingChoice(32, 4)),
    (LayerSpec("std_s2", "standard_conv", 32, 32, 4, 32, 3, 2, 1), TilingChoice(32, 4)),
    (LayerSpec("pw", "pointwise_conv", 32, 32, 32, 32, 1, 1, 0), None),
    (LayerSpec("dw", "depthwise_conv", 32, 32, 32, 32, 3, 1, 1), None),
]


def _time(layer, t, x, w, backend, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out, _ = run_layer(SimMachine(backend=backend), layer, t, x, w, 10)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    hw = HardwareConfig()
    print(f"{'layer':<8}{'MACs':>12}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for layer, t in CASES:
        t = t or default_tiling(layer, hw)
        x = QTensor.random((layer.in_ch, layer.in_h, layer.in_w), rng)
        n = 1 if layer.kind == "depthwise_conv" else layer.in_ch
        w = QTensor.random((layer.out_ch, n, layer.kernel, layer.kernel), rng)
        _time(layer, t, x, w, "numba", 1)  # compile
        tn, a = _time(layer, t, x, w, "numba", args.repeat)
        tp, b = _time(layer, t, x, w, "numpy", args.repeat)
        assert a == b, f"{layer.name}: backends disagree"
        print(f"{layer.name:<8}{layer.macs:>12}{tn:>10.4f}{tp:>10.4f}{tp / tn:>8.1f}x")


if __name__ == "__main__":
    main()
