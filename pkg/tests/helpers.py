"""Random layer generation shared by the simulator tests."""

import numpy as np

from cnnaccel.network import LayerSpec, NetworkValidationError
from cnnaccel.qtensor import QTensor


def random_layer(rng, kind, pool=None, max_dim=32, max_ch=64, name="rl"):
    """Draw until the shape is valid. pool=None lets pooling be random."""
    for _ in range(1000):
        h, w = (int(v) for v in rng.integers(3, max_dim + 1, size=2))
        if kind == "pointwise_conv":
            n, m = (int(v) for v in rng.integers(1, max_ch + 1, size=2))
            k, s, p = 1, 1, 0
        else:
            n = int(rng.integers(1, max_ch + 1))
            m = n if kind == "depthwise_conv" else int(rng.integers(1, max_ch + 1))
            k, s, p = 3, int(rng.integers(1, 3)), int(rng.integers(0, 2))
        want_pool = bool(rng.integers(0, 2)) if pool is None else pool
        try:
            return LayerSpec(name, kind, h, w, n, m, k, s, p, want_pool)
        except NetworkValidationError:
            continue
    raise RuntimeError("could not draw a valid layer")


def random_tensors(rng, layer):
    x = QTensor.random((layer.in_ch, layer.in_h, layer.in_w), rng)
    n = 1 if layer.kind == "depthwise_conv" else layer.in_ch
    w = QTensor.random((layer.out_ch, n, layer.kernel, layer.kernel), rng)
    return x, w


def shift_for(layer):
    terms = layer.kernel ** 2 * (1 if layer.kind == "depthwise_conv" else layer.in_ch)
    return 7 + (terms.bit_length() + 1) // 2
