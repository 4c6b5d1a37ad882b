"""Reference (ground-truth) quantized convolution and pooling.

Deliberately straightforward: zero-pad, slide, accumulate in wide integers,
requantize once. Nothing here is shared with the simulator datapath except the
numeric contract itself.
"""

from __future__ import annotations

import numpy as np

from .network import LayerSpec
from .qtensor import QTensor

INT8_MIN, INT8_MAX = -128, 127


def requantize_ref(acc: int, scale_exp: int, relu: bool) -> int:
    """ReLU clamp, arithmetic right shift with round-half-away-from-zero, int8 saturation."""
    if scale_exp < 0:
        raise ValueError("scale_exp must be >= 0")
    acc = int(acc)
    if relu and acc < 0:
        acc = 0
    if scale_exp:
        mag = (abs(acc) + (1 << (scale_exp - 1))) >> scale_exp
        acc = mag if acc >= 0 else -mag
    return max(INT8_MIN, min(INT8_MAX, acc))


def requantize_array(acc: np.ndarray, scale_exp: int, relu: bool) -> np.ndarray:
    if scale_exp < 0:
        raise ValueError("scale_exp must be >= 0")
    a = np.asarray(acc, dtype=np.int64)
    if relu:
        a = np.maximum(a, 0)
    if scale_exp:
        mag = (np.abs(a) + (1 << (scale_exp - 1))) >> scale_exp
        a = np.where(a >= 0, mag, -mag)
    return np.clip(a, INT8_MIN, INT8_MAX).astype(np.int8)


def _check(inp: QTensor, kernels: QTensor, layer: LayerSpec, depthwise: bool):
    x, w = inp.values, kernels.values
    if x.ndim != 3 or x.shape != (layer.in_ch, layer.in_h, layer.in_w):
        raise ValueError(f"input shape {x.shape} != {(layer.in_ch, layer.in_h, layer.in_w)}")
    want = (layer.out_ch, 1 if depthwise else layer.in_ch, layer.kernel, layer.kernel)
    if w.shape != want:
        raise ValueError(f"kernel shape {w.shape} != {want}")


def _taps(x: np.ndarray, layer: LayerSpec):
    """Yield (ky, kx, strided view of the padded input) for every kernel tap."""
    p, s, k = layer.pad, layer.stride, layer.kernel
    oh, ow = layer.out_h, layer.out_w
    xp = np.pad(x.astype(np.int64), ((0, 0), (p, p), (p, p)))
    for ky in range(k):
        for kx in range(k):
            yield ky, kx, xp[:, ky:ky + s * (oh - 1) + 1:s, kx:kx + s * (ow - 1) + 1:s]


def _finish(acc, layer, inp, kernels, scale_exp, pe_shift):
    if pe_shift is not None and not 0 <= pe_shift <= scale_exp:
        raise ValueError("pe_shift must lie in [0, scale_exp]")
    out = requantize_array(acc, scale_exp - (pe_shift or 0), layer.relu)
    return QTensor(out, inp.scale_exp + kernels.scale_exp - scale_exp)


def conv2d_ref(inp: QTensor, kernels: QTensor, layer: LayerSpec, scale_exp: int,
               pe_shift: int | None = None) -> QTensor:
    """Dense convolution (standard or 1x1). `pe_shift` selects per-product requantization."""
    _check(inp, kernels, layer, depthwise=False)
    w = kernels.values.astype(np.int64)
    acc = np.zeros((layer.out_ch, layer.out_h, layer.out_w), dtype=np.int64)
    for ky, kx, win in _taps(inp.values, layer):
        if pe_shift is None:
            acc += np.einsum("mn,nhw->mhw", w[:, :, ky, kx], win)
        else:
            prod = w[:, :, ky, kx][:, :, None, None] * win[None]
            acc += requantize_array(prod, pe_shift, False).astype(np.int64).sum(axis=1)
    return _finish(acc, layer, inp, kernels, scale_exp, pe_shift)


def depthwise_ref(inp: QTensor, kernels: QTensor, layer: LayerSpec, scale_exp: int,
                  pe_shift: int | None = None) -> QTensor:
    if layer.out_ch != layer.in_ch:
        raise ValueError("depthwise requires M = N")
    _check(inp, kernels, layer, depthwise=True)
    w = kernels.values.astype(np.int64)[:, 0]
    acc = np.zeros((layer.out_ch, layer.out_h, layer.out_w), dtype=np.int64)
    for ky, kx, win in _taps(inp.values, layer):
        prod = w[:, ky, kx][:, None, None] * win
        if pe_shift is not None:
            prod = requantize_array(prod, pe_shift, False).astype(np.int64)
        acc += prod
    return _finish(acc, layer, inp, kernels, scale_exp, pe_shift)


def layer_ref(inp: QTensor, kernels: QTensor, layer: LayerSpec, scale_exp: int,
              pe_shift: int | None = None) -> QTensor:
    if layer.kind == "depthwise_conv":
        return depthwise_ref(inp, kernels, layer, scale_exp, pe_shift)
    return conv2d_ref(inp, kernels, layer, scale_exp, pe_shift)


def maxpool_ref(inp: QTensor) -> QTensor:
    x = inp.values
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max pooling needs even dims, got {h}x{w}")
    out = x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))
    return QTensor(out, inp.scale_exp)


def conv_pixel_scalar(x: np.ndarray, w: np.ndarray, layer: LayerSpec, m: int, oy: int, ox: int) -> int:
    """Pre-activation sum of one output pixel, by plain nested loops."""
    total = 0
    for n in range(layer.in_ch):
        for ky in range(layer.kernel):
            for kx in range(layer.kernel):
                iy = oy * layer.stride + ky - layer.pad
                ix = ox * layer.stride + kx - layer.pad
                if 0 <= iy < layer.in_h and 0 <= ix < layer.in_w:
                    total += int(x[n, iy, ix]) * int(w[m, n, ky, kx])
    return total


def network_ref(net, inputs: QTensor, weights, shifts) -> list[QTensor]:
    """Run every layer (and its pool) through the reference path; returns per-layer outputs."""
    outs, cur = [], inputs
    for layer, w, s in zip(net.layers, weights, shifts):
        cur = layer_ref(cur, w, layer, s)
        if layer.followed_by_pool:
            cur = maxpool_ref(cur)
        outs.append(cur)
    return outs
