"""Datapath kernels: ring-plan executor and 1x1 array, in numba and numpy flavours.

Both flavours take identical arguments and must produce identical accumulators.
`pe_shift < 0` means products enter the adder tree unrounded; otherwise every
product is rounded (half away from zero) by pe_shift and saturated to int8
before accumulation.
"""

from __future__ import annotations

import numpy as np

from ._jit import njit, HAVE_NUMBA
from .plan import (
    SRC_FSRAM, SRC_HALO, SRC_REUSE, SRC_FRSRAM, SRC_WIN,
    DST_WIN, DST_REUSE, MOVE_RIGHT, MOVE_LEFT, MOVE_UP,
)


def requantize(acc: np.ndarray, shift: int, relu: bool) -> np.ndarray:
    a = np.asarray(acc, dtype=np.int64)
    if relu:
        a = np.where(a < 0, 0, a)
    if shift > 0:
        half = np.int64(1) << (shift - 1)
        a = np.sign(a) * ((np.abs(a) + half) >> shift)
    return np.minimum(np.maximum(a, -128), 127).astype(np.int8)


# ---------------------------------------------------------------- numpy

def _pe_round_np(prod, shift):
    if shift < 0:
        return prod
    if shift > 0:
        half = np.int64(1) << (shift - 1)
        prod = np.sign(prod) * ((np.abs(prod) + half) >> shift)
    return np.clip(prod, -128, 127)


def _shift_np(win, mv, s):
    k = win.shape[1]
    if mv == MOVE_RIGHT:
        win[:, :, :k - s] = win[:, :, s:].copy()
    elif mv == MOVE_LEFT:
        win[:, :, s:] = win[:, :, :k - s].copy()
    elif mv == MOVE_UP:
        win[:, :k - s, :] = win[:, s:, :].copy()


def ring_exec_np(x, w, acc, move, oy, ox, mac, op_off, op_src, op_sa, op_sb, op_dst, op_da, op_db,
                 stride, width, pe_shift, depthwise):
    """x: (C, H, W) int8 staged channels. w: (T, C, K, K) or (C, 1, K, K) when depthwise.
    acc: (T, OH, OW) int64, accumulated in place (T = C when depthwise)."""
    c_n = x.shape[0]
    k = w.shape[-1]
    win = np.zeros((c_n, k, k), dtype=np.int64)
    regs = np.zeros((c_n, 2, width), dtype=np.int64)
    frs = np.zeros((c_n, 2, width), dtype=np.int64)
    w64 = w.astype(np.int64)
    wdw = w64[:, 0] if depthwise else None
    for st in range(len(move)):
        _shift_np(win, move[st], stride)
        for o in range(op_off[st], op_off[st + 1]):
            src, a, b = op_src[o], op_sa[o], op_sb[o]
            if src == SRC_FSRAM:
                v = x[:, a, b].astype(np.int64)
            elif src == SRC_HALO:
                v = 0
            elif src == SRC_REUSE:
                v = regs[:, a, b]
            elif src == SRC_FRSRAM:
                v = frs[:, a, b]
            else:
                v = win[:, a, b]
            dst = op_dst[o]
            if dst == DST_WIN:
                win[:, op_da[o], op_db[o]] = v
            elif dst == DST_REUSE:
                regs[:, op_da[o], op_db[o]] = v
            else:
                frs[:, op_da[o], op_db[o]] = v
        if mac[st]:
            if depthwise:
                acc[:, oy[st], ox[st]] += _pe_round_np(win * wdw, pe_shift).sum(axis=(1, 2))
            else:
                acc[:, oy[st], ox[st]] += _pe_round_np(w64 * win[None], pe_shift).sum(axis=(1, 2, 3))


def pointwise_exec_np(x, w, acc, order_y, order_x, stride, pe_shift):
    """x: (C, H, W) int8; w: (T, C) int64; one output pixel of every row channel per step."""
    w64 = w.astype(np.int64)
    for i in range(len(order_y)):
        y, xx = order_y[i], order_x[i]
        col = x[:, y * stride, xx * stride].astype(np.int64)
        acc[:, y, xx] += _pe_round_np(w64 * col[None, :], pe_shift).sum(axis=1)


# ---------------------------------------------------------------- numba

@njit
def _pe_round_nb(v, shift):
    if shift < 0:
        return v
    if shift > 0:
        half = np.int64(1) << (shift - 1)
        if v >= 0:
            v = (v + half) >> shift
        else:
            v = -((-v + half) >> shift)
    if v > 127:
        return np.int64(127)
    if v < -128:
        return np.int64(-128)
    return v


@njit
def ring_exec_nb(x, w, acc, move, oy, ox, mac, op_off, op_src, op_sa, op_sb, op_dst, op_da, op_db,
                 stride, width, pe_shift, depthwise):
    c_n = x.shape[0]
    k = w.shape[3]
    t_n = acc.shape[0]
    win = np.zeros((c_n, k, k), dtype=np.int64)
    regs = np.zeros((c_n, 2, width), dtype=np.int64)
    frs = np.zeros((c_n, 2, width), dtype=np.int64)
    s = stride
    for st in range(move.shape[0]):
        mv = move[st]
        for c in range(c_n):
            if mv == MOVE_RIGHT:
                for wr in range(k):
                    for wc in range(k - s):
                        win[c, wr, wc] = win[c, wr, wc + s]
            elif mv == MOVE_LEFT:
                for wr in range(k):
                    for wc in range(k - 1, s - 1, -1):
                        win[c, wr, wc] = win[c, wr, wc - s]
            elif mv == MOVE_UP:
                for wr in range(k - s):
                    for wc in range(k):
                        win[c, wr, wc] = win[c, wr + s, wc]
        for o in range(op_off[st], op_off[st + 1]):
            src = op_src[o]
            a = op_sa[o]
            b = op_sb[o]
            dst = op_dst[o]
            da = op_da[o]
            db = op_db[o]
            for c in range(c_n):
                if src == SRC_FSRAM:
                    v = np.int64(x[c, a, b])
                elif src == SRC_HALO:
                    v = np.int64(0)
                elif src == SRC_REUSE:
                    v = regs[c, a, b]
                elif src == SRC_FRSRAM:
                    v = frs[c, a, b]
                else:
                    v = win[c, a, b]
                if dst == DST_WIN:
                    win[c, da, db] = v
                elif dst == DST_REUSE:
                    regs[c, da, db] = v
                else:
                    frs[c, da, db] = v
        if mac[st]:
            y = oy[st]
            xx = ox[st]
            if depthwise:
                for c in range(c_n):
                    tot = np.int64(0)
                    for wr in range(k):
                        for wc in range(k):
                            tot += _pe_round_nb(win[c, wr, wc] * np.int64(w[c, 0, wr, wc]), pe_shift)
                    acc[c, y, xx] += tot
            else:
                for m in range(t_n):
                    tot = np.int64(0)
                    for c in range(c_n):
                        for wr in range(k):
                            for wc in range(k):
                                tot += _pe_round_nb(win[c, wr, wc] * np.int64(w[m, c, wr, wc]), pe_shift)
                    acc[m, y, xx] += tot


@njit
def pointwise_exec_nb(x, w, acc, order_y, order_x, stride, pe_shift):
    t_n, c_n = w.shape[0], w.shape[1]
    for i in range(order_y.shape[0]):
        y = order_y[i]
        xx = order_x[i]
        for m in range(t_n):
            tot = np.int64(0)
            for c in range(c_n):
                tot += _pe_round_nb(np.int64(x[c, y * stride, xx * stride]) * np.int64(w[m, c]), pe_shift)
            acc[m, y, xx] += tot


def get_kernels(backend: str):
    """(ring_exec, pointwise_exec) for the named backend."""
    if backend == "numba":
        if not HAVE_NUMBA:  # pragma: no cover
            raise RuntimeError("numba is not available")
        return ring_exec_nb, pointwise_exec_nb
    return ring_exec_np, pointwise_exec_np
