"""Layer and network execution on a SimMachine.

Each run_* call returns the output tensor and the SimCounters of that call;
the machine also keeps running totals and the global clock used by traces.
"""

from __future__ import annotations

import numpy as np

from ..costmodel import (
    OUTPUT_REUSE, INPUT_REUSE, TilingChoice, cdiv, check_tiling, choose_tsize, default_tiling, uses_decomposition,
)
from ..network import LayerSpec, NetworkSpec
from ..qtensor import QTensor
from ..schedule import decompose_channels, schedule_ring, split_rows
from .kernels import get_kernels, requantize
from .machine import SimCapacityError, SimCounters, SimMachine
from .plan import (
    RingPlan, ring_plan, SRC_FSRAM, SRC_HALO, SRC_REUSE, SRC_FRSRAM, SRC_WIN, DST_FRSRAM,
)


# ---------------------------------------------------------------- checks

def _check_io(layer: LayerSpec, inp: QTensor, kernels: QTensor, depthwise: bool) -> None:
    want_in = (layer.in_ch, layer.in_h, layer.in_w)
    if inp.values.shape != want_in:
        raise ValueError(f"{layer.name}: input dims {inp.values.shape} != {want_in}")
    want_k = (layer.out_ch, 1 if depthwise else layer.in_ch, layer.kernel, layer.kernel)
    if kernels.values.shape != want_k:
        raise ValueError(f"{layer.name}: kernel dims {kernels.values.shape} != {want_k}")


def _check_shift(scale_exp: int, pe_shift) -> int:
    if scale_exp < 0:
        raise ValueError("scale_exp must be >= 0")
    if pe_shift is None:
        return scale_exp
    if not 0 <= pe_shift <= scale_exp:
        raise ValueError("pe_shift must lie in [0, scale_exp]")
    return scale_exp - pe_shift


def _window(layer: LayerSpec):
    s, k = layer.stride, layer.kernel
    return s * layer.out_h + k - s, s * layer.out_w + k - s


def _real_rows(layer: LayerSpec, pr0: int, pr1: int) -> np.ndarray:
    rows = np.arange(pr0, pr1) - layer.pad
    return rows[(rows >= 0) & (rows < layer.in_h)]


def _real_cols(layer: LayerSpec) -> int:
    cols = np.arange(_window(layer)[1]) - layer.pad
    return int(np.count_nonzero((cols >= 0) & (cols < layer.in_w)))


def _check_staging(sim: SimMachine, layer: LayerSpec, segs, channels: int, channel_major: bool) -> None:
    """One spatial segment of `channels` input channels must fit one feature buffer and its banks."""
    hw = sim.hw
    s, k = layer.stride, layer.kernel
    for start, n in segs:
        rows = _real_rows(layer, start * s, (start + n) * s + k - s)
        total = channels * len(rows) * layer.in_w
        if total > hw.fsram_bytes_per_buffer:
            raise SimCapacityError(
                f"{layer.name}: input segment {total} B exceeds one feature buffer "
                f"({hw.fsram_bytes_per_buffer} B); increase tsize")
        per_bank = np.zeros(hw.fsram_banks, dtype=np.int64)
        for c in range(channels):
            np.add.at(per_bank, sim.feature_bank(c, rows, channel_major), layer.in_w)
        if per_bank.max(initial=0) > hw.fsram_bank_bytes:
            raise SimCapacityError(
                f"{layer.name}: bank occupancy {per_bank.max()} B exceeds {hw.fsram_bank_bytes} B; increase tsize")


def _check_reuse_width(sim: SimMachine, plan: RingPlan, channels: int, segmented: bool) -> None:
    hw = sim.hw
    # one slot of each array is the staggering slot
    if sim.reuse_regs and plan.width > hw.reuse_regs_per_array - 1:
        raise SimCapacityError(
            f"padded row of {plan.width} pixels exceeds a reuse array ({hw.reuse_regs_per_array - 1} payload slots)")
    if segmented and plan.frsram_writes:
        need = channels * (plan.kernel - plan.stride) * plan.width
        if need > hw.frsram_bytes:
            raise SimCapacityError(f"segment boundary rows need {need} B of feature-reuse SRAM ({hw.frsram_bytes} B)")


def _check_wsram(sim: SimMachine, kernels: int, k2: int) -> None:
    if kernels * k2 > sim.hw.wsram_bytes:
        raise SimCapacityError(f"{kernels} kernels of {k2} weights exceed the weight SRAM ({sim.hw.wsram_bytes} B)")


# ---------------------------------------------------------------- shared pieces

def _plan_bank_hist(sim: SimMachine, plan: RingPlan, channels: int, channel_major: bool, first: int = 0):
    rows = plan.fsram_rows()
    hist = np.zeros(sim.hw.fsram_banks, dtype=np.int64)
    for c in range(first, first + channels):
        hist += np.bincount(sim.feature_bank(c, rows, channel_major), minlength=sim.hw.fsram_banks)
    return hist


def _mac_steps(plan: RingPlan):
    idx = np.flatnonzero(plan.mac)
    return plan.oy[idx], plan.ox[idx], idx


def _load_weights(sim: SimMachine, cnt: SimCounters, n_kernels: int, k2: int, base: int, dram: bool = True) -> None:
    """Kernels go to WSRAM one per bank row, all banks written in parallel; each PEA then reads its row once."""
    hw = sim.hw
    banks = np.arange(n_kernels) % hw.wsram_banks
    per_bank = np.bincount(banks, minlength=hw.wsram_banks)
    cnt.wsram_writes += per_bank
    cnt.wsram_reads += per_bank
    cnt.weight_load_cycles += cdiv(n_kernels, hw.wsram_banks)
    if dram:
        cnt.dram("weight", n_kernels * k2)
        sim.event(base, "dram", "read", "weight", n_kernels * k2)
    if sim.trace is not None:
        for i in range(n_kernels):
            sim.event(base + i // hw.wsram_banks, "wsram", "write", f"b{banks[i]}", k2)


def _stage_input(sim: SimMachine, cnt: SimCounters, layer: LayerSpec, channels: int, rows: np.ndarray,
                 channel_major: bool, dram_bytes: int, base: int, first: int = 0) -> None:
    """DRAM -> active feature buffer. Only real pixels are written; the halo is synthesized on read."""
    if dram_bytes:
        cnt.dram("input", dram_bytes)
        sim.event(base, "dram", "read", "input", dram_bytes)
    ncols = _real_cols(layer)
    for c in range(first, first + channels):
        np.add.at(cnt.fsram_writes[sim.active], sim.feature_bank(c, rows, channel_major), ncols)


def _plan_counts(sim, cnt, plan, channels, channel_major, first=0):
    cnt.fsram_reads[sim.active] += _plan_bank_hist(sim, plan, channels, channel_major, first)
    cnt.fsram_row_accesses += plan.dppr_row_accesses() * channels
    cnt.reuse_reg_hits += plan.reuse_hits * channels
    cnt.reuse_reg_writes += plan.reuse_writes * channels
    cnt.rsram_reads += plan.frsram_reads * channels
    cnt.rsram_writes += plan.frsram_writes * channels
    cnt.halo_pixels += plan.halo_pixels * channels


def _trace_plan(sim: SimMachine, plan: RingPlan, base: int, cols, channel_major: bool) -> None:
    if sim.trace is None:
        return
    for st in range(plan.n_steps):
        cyc = base + st
        for o in plan.step_ops(st):
            src, a, b, dst = plan.op_src[o], plan.op_sa[o], plan.op_sb[o], plan.op_dst[o]
            for c in cols:
                if src == SRC_FSRAM:
                    sim.event(cyc, "fsram", "read", f"b{sim.feature_bank(c, int(a), channel_major)}", 1)
                elif src == SRC_HALO:
                    sim.event(cyc, "pad", "synth", f"{a}:{b}", 0)
                elif src == SRC_REUSE:
                    sim.event(cyc, "reuse", "hit", f"c{c}:{a}:{b}", 1)
                elif src == SRC_FRSRAM:
                    sim.event(cyc, "frsram", "read", f"c{c}:{a}:{b}", 1)
                elif src == SRC_WIN and dst == DST_FRSRAM:
                    sim.event(cyc, "frsram", "write", f"c{c}:{plan.op_da[o]}:{plan.op_db[o]}", 1)


class _Output:
    """Collects requantized groups, fuses pooling and routes products to DRAM or the idle buffer."""

    def __init__(self, sim, cnt, layer, shift, fuse, on_chip, count_dram):
        self.sim, self.cnt, self.layer = sim, cnt, layer
        self.shift, self.fuse, self.on_chip, self.count_dram = shift, fuse, on_chip, count_dram
        m, oh, ow = layer.out_ch, layer.out_h, layer.out_w
        self.out = np.zeros((m, oh, ow), dtype=np.int8)
        self.pooled = np.zeros((m, oh // 2, ow // 2), dtype=np.int8) if fuse else None

    def group(self, m0, acc_blk, completion, segs, t_end):
        sim, cnt = self.sim, self.cnt
        q = requantize(acc_blk, self.shift, self.layer.relu)
        self.out[m0:m0 + len(q)] = q
        if sim.trace is not None:
            for (y, x), cyc in np.ndenumerate(completion):
                sim.event(cyc, "cca", "done", f"{y}:{x}", len(q))
        res = q
        if self.fuse:
            pq, pc = run_onfly_pool(sim, QTensor(q), completion, segs, route=False, record=False)
            cnt += pc
            self.pooled[m0:m0 + len(q)] = pq.values
            res = pq.values
        nbytes = res.size
        if self.on_chip:
            dst = sim.active ^ 1
            for c in range(res.shape[0]):
                np.add.at(cnt.fsram_writes[dst], sim.feature_bank(m0 + c, np.arange(res.shape[1])), res.shape[2])
            sim.event(t_end, "fsram", "write", f"buf{dst}", nbytes)
        elif self.count_dram:
            cnt.dram("output", nbytes, write=True)
            sim.event(t_end, "dram", "write", "output", nbytes)

    def result(self):
        return self.pooled if self.fuse else self.out


def _pass_order(mp: int, np_: int, strategy: str):
    if strategy == INPUT_REUSE:
        return [(g, b) for b in range(np_) for g in range(mp)]
    return [(g, b) for g in range(mp) for b in range(np_)]


def _spill(sim, cnt, nbytes, cyc):
    """Input-reuse partial sums leave the chip after every pass and come back for the next."""
    cnt.dram("output", nbytes, write=True)
    cnt.dram("output", nbytes)
    sim.event(cyc, "dram", "write", "psum", nbytes)
    sim.event(cyc, "dram", "read", "psum", nbytes)


def _out_scale(inp: QTensor, kernels: QTensor, scale_exp: int) -> int:
    return inp.scale_exp + kernels.scale_exp - scale_exp


# ---------------------------------------------------------------- standard 3x3

def run_standard_conv(sim: SimMachine, layer: LayerSpec, t: TilingChoice, inp: QTensor, kernels: QTensor,
                      scale_exp: int, decomposed: bool = False, pool: bool = False, pe_shift: int | None = None,
                      input_on_chip: bool = False, output_on_chip: bool = False):
    """Ring-dataflow convolution on the 32x4 PEA array.

    pool: fuse the layer's 2x2 max pool (on-fly pooling); the returned tensor is then the pooled map.
    input_on_chip/output_on_chip: operand already resident in / product kept in the feature buffers.
    """
    hw = sim.hw
    if layer.kind != "standard_conv" or layer.kernel != 3:
        raise ValueError(f"{layer.name}: run_standard_conv needs a 3x3 standard_conv")
    _check_io(layer, inp, kernels, depthwise=False)
    check_tiling(layer, t, hw)
    shift = _check_shift(scale_exp, pe_shift)
    if pool and not layer.followed_by_pool:
        raise ValueError(f"{layer.name}: layer has no pooling stage to fuse")
    fuse = pool and layer.followed_by_pool
    pe = -1 if pe_shift is None else pe_shift
    cnt = sim.counters()
    x = np.ascontiguousarray(inp.values)
    w = np.ascontiguousarray(kernels.values)
    m_n, n_n, k2 = layer.out_ch, layer.in_ch, layer.kernel ** 2
    oh, ow, s = layer.out_h, layer.out_w, layer.stride
    acc = np.zeros((m_n, oh, ow), dtype=np.int64)
    ring_exec, _ = get_kernels(sim.backend)
    spill_fuse = (oh * ow // 4) if fuse else oh * ow
    sink = _Output(sim, cnt, layer, shift, fuse, output_on_chip, count_dram=t.strategy == OUTPUT_REUSE)
    side_h, side_w = _window(layer)

    if uses_decomposition(layer, decomposed, hw):
        tsize = t.tsize if t.tsize > 1 else choose_tsize(layer, hw)
        segs = split_rows(oh, tsize)
        tasks = decompose_channels(n_n, len(segs), hw.pea_cols)
        plans = [ring_plan(layer, s0, n, reuse=sim.reuse_regs, primed=sim.reuse_regs) for s0, n in segs]
        for p in plans:
            _check_reuse_width(sim, p, 1, False)
        _check_staging(sim, layer, segs, 1, False)
        fill = hw.decomp_fill_rows * ow
        _check_wsram(sim, t.tm * n_n, k2)
        for g in range(cdiv(m_n, t.tm)):
            m0, m1 = g * t.tm, min(m_n, (g + 1) * t.tm)
            tm_e = m1 - m0
            base = sim.clock
            _load_weights(sim, cnt, tm_e * n_n, k2, base)
            completion = np.zeros((oh, ow), dtype=np.int64)
            ends, busy = [], []
            wblk = np.ascontiguousarray(w[m0:m1])
            for col, tl in enumerate(tasks):
                cur = work = 0
                for ch, si in tl:
                    plan, (s0, n) = plans[si], segs[si]
                    pr0, pr1 = s0 * s, (s0 + n) * s + 3 - s
                    start = base + cur
                    _stage_input(sim, cnt, layer, 1, _real_rows(layer, pr0, pr1), False,
                                 0 if input_on_chip else (pr1 - pr0) * side_w, start, first=col)
                    ring_exec(np.ascontiguousarray(x[ch:ch + 1]), np.ascontiguousarray(wblk[:, ch:ch + 1]),
                              acc[m0:m1], *plan.arrays(), s, plan.width, pe, False)
                    _plan_counts(sim, cnt, plan, 1, False, first=col)
                    _trace_plan(sim, plan, start, (col,), False)
                    oy, ox, idx = _mac_steps(plan)
                    k_off = np.arange(len(idx))
                    done = start + fill + k_off
                    completion[oy, ox] = np.maximum(completion[oy, ox], done)
                    cnt.active_mac_cycles += len(idx) * tm_e * k2
                    cur += fill + n * ow
                    work += n * ow
                ends.append(cur)
                busy.append(work)
            group_cycles = max(ends)
            cnt.cycles += group_cycles
            cnt.compute_cycles += max(busy)
            cnt.passes += 1
            sim.clock += group_cycles
            sink.group(m0, acc[m0:m1], completion, segs, sim.clock)
        return _finish(sim, cnt, sink, inp, kernels, scale_exp)

    segs = split_rows(oh, t.tsize)
    plan = ring_plan(layer, seg_starts=[s0 for s0, _ in segs[1:]], reuse=sim.reuse_regs)
    tn_e = min(t.tn, n_n)
    _check_reuse_width(sim, plan, tn_e, len(segs) > 1)
    _check_staging(sim, layer, segs, tn_e, False)
    _check_wsram(sim, min(t.tm, m_n) * tn_e, k2)
    mp, np_ = cdiv(m_n, t.tm), cdiv(n_n, t.tn)
    oy, ox, idx = _mac_steps(plan)
    all_rows = _real_rows(layer, 0, side_h)
    loaded = set()
    ov = hw.pass_overhead_cycles
    for g, b in _pass_order(mp, np_, t.strategy):
        m0, m1 = g * t.tm, min(m_n, (g + 1) * t.tm)
        c0, c1 = b * t.tn, min(n_n, (b + 1) * t.tn)
        tm_e, c_e = m1 - m0, c1 - c0
        base = sim.clock
        _load_weights(sim, cnt, tm_e * c_e, k2, base)
        if t.strategy == OUTPUT_REUSE or b not in loaded:
            _stage_input(sim, cnt, layer, c_e, all_rows, False, 0 if input_on_chip else c_e * side_h * side_w, base)
            loaded.add(b)
        ring_exec(np.ascontiguousarray(x[c0:c1]), np.ascontiguousarray(w[m0:m1, c0:c1]), acc[m0:m1],
                  *plan.arrays(), s, plan.width, pe, False)
        _plan_counts(sim, cnt, plan, c_e, False)
        _trace_plan(sim, plan, base, range(c_e), False)
        cnt.active_mac_cycles += len(idx) * tm_e * c_e * k2
        pass_cycles = ov + plan.n_steps
        cnt.cycles += pass_cycles
        cnt.compute_cycles += plan.n_steps
        cnt.passes += 1
        sim.clock += pass_cycles
        if t.strategy == INPUT_REUSE and not output_on_chip:
            _spill(sim, cnt, tm_e * spill_fuse, sim.clock)
        if b == np_ - 1:
            completion = np.zeros((oh, ow), dtype=np.int64)
            completion[oy, ox] = base + ov + idx
            sink.group(m0, acc[m0:m1], completion, segs, sim.clock)
    return _finish(sim, cnt, sink, inp, kernels, scale_exp)


def _finish(sim, cnt, sink, inp, kernels, scale_exp):
    sim.finish(cnt)
    return QTensor(sink.result(), _out_scale(inp, kernels, scale_exp)), cnt


# ---------------------------------------------------------------- 1x1

def run_pointwise(sim: SimMachine, layer: LayerSpec, inp: QTensor, kernels: QTensor, scale_exp: int,
                  t: TilingChoice | None = None, pool: bool = False, pe_shift: int | None = None,
                  input_on_chip: bool = False, output_on_chip: bool = False):
    """1x1 layers: 32 input channels (one per PEA column lane) x 32 output channels (PEA rows) = 1024 PEs.

    Each cycle the same coordinate is fetched from every staged input channel and one
    output pixel is produced for every output channel in the pass.
    """
    hw = sim.hw
    if layer.kernel != 1:
        raise ValueError(f"{layer.name}: run_pointwise needs K = 1")
    _check_io(layer, inp, kernels, depthwise=False)
    t = t or default_tiling(layer, hw)
    check_tiling(layer, t, hw)
    shift = _check_shift(scale_exp, pe_shift)
    if pool and not layer.followed_by_pool:
        raise ValueError(f"{layer.name}: layer has no pooling stage to fuse")
    fuse = pool and layer.followed_by_pool
    pe = -1 if pe_shift is None else pe_shift
    cnt = sim.counters()
    x = np.ascontiguousarray(inp.values)
    w = np.ascontiguousarray(kernels.values[:, :, 0, 0]).astype(np.int64)
    m_n, n_n = layer.out_ch, layer.in_ch
    oh, ow, s = layer.out_h, layer.out_w, layer.stride
    acc = np.zeros((m_n, oh, ow), dtype=np.int64)
    _, pw_exec = get_kernels(sim.backend)
    order = schedule_ring(oh, ow)
    order_y = np.array([o[0] for o in order], dtype=np.int64)
    order_x = np.array([o[1] for o in order], dtype=np.int64)
    steps = len(order)
    side_h, side_w = _window(layer)
    tn_e = min(t.tn, n_n)
    _check_staging(sim, layer, [(0, oh)], tn_e, True)
    _check_wsram(sim, min(t.tm, m_n) * tn_e, 1)
    sink = _Output(sim, cnt, layer, shift, fuse, output_on_chip, count_dram=t.strategy == OUTPUT_REUSE)
    mp, np_ = cdiv(m_n, t.tm), cdiv(n_n, t.tn)
    rows_read = order_y * s
    all_rows = _real_rows(layer, 0, side_h)
    loaded = set()
    ov = hw.pass_overhead_cycles
    spill_px = oh * ow // 4 if fuse else oh * ow
    for g, b in _pass_order(mp, np_, t.strategy):
        m0, m1 = g * t.tm, min(m_n, (g + 1) * t.tm)
        c0, c1 = b * t.tn, min(n_n, (b + 1) * t.tn)
        tm_e, c_e = m1 - m0, c1 - c0
        base = sim.clock
        _load_weights(sim, cnt, tm_e * c_e, 1, base)
        if t.strategy == OUTPUT_REUSE or b not in loaded:
            _stage_input(sim, cnt, layer, c_e, all_rows, True, 0 if input_on_chip else c_e * side_h * side_w, base)
            loaded.add(b)
        pw_exec(np.ascontiguousarray(x[c0:c1]), np.ascontiguousarray(w[m0:m1, c0:c1]), acc[m0:m1],
                order_y, order_x, s, pe)
        for c in range(c_e):
            cnt.fsram_reads[sim.active] += np.bincount(sim.feature_bank(c, rows_read, True),
                                                       minlength=hw.fsram_banks)
        cnt.fsram_row_accesses += steps * c_e
        if sim.trace is not None:
            for i in range(steps):
                for c in range(c_e):
                    sim.event(base + i, "fsram", "read", f"b{sim.feature_bank(c, int(rows_read[i]), True)}", 1)
        cnt.active_mac_cycles += steps * tm_e * c_e
        cnt.cycles += ov + steps
        cnt.compute_cycles += steps
        cnt.passes += 1
        sim.clock += ov + steps
        if t.strategy == INPUT_REUSE and not output_on_chip:
            _spill(sim, cnt, tm_e * spill_px, sim.clock)
        if b == np_ - 1:
            completion = np.zeros((oh, ow), dtype=np.int64)
            completion[order_y, order_x] = base + ov + np.arange(steps)
            sink.group(m0, acc[m0:m1], completion, [(0, oh)], sim.clock)
    return _finish(sim, cnt, sink, inp, kernels, scale_exp)


# ---------------------------------------------------------------- depthwise

def run_depthwise(sim: SimMachine, layer: LayerSpec, inp: QTensor, kernels: QTensor, scale_exp: int,
                  t: TilingChoice | None = None, pool: bool = False, pe_shift: int | None = None,
                  input_on_chip: bool = False, output_on_chip: bool = False):
    """Depthwise 3x3: one PEA per array row (column 0 only), tm channels per pass.

    Every PEA sees a different channel, so the shared column reuse registers
    cannot serve it; each lateral step fetches its full new window column.
    """
    hw = sim.hw
    if layer.kind != "depthwise_conv":
        raise ValueError(f"{layer.name}: run_depthwise needs a depthwise_conv layer")
    _check_io(layer, inp, kernels, depthwise=True)
    t = t or default_tiling(layer, hw)
    check_tiling(layer, t, hw)
    shift = _check_shift(scale_exp, pe_shift)
    if pool and not layer.followed_by_pool:
        raise ValueError(f"{layer.name}: layer has no pooling stage to fuse")
    fuse = pool and layer.followed_by_pool
    pe = -1 if pe_shift is None else pe_shift
    cnt = sim.counters()
    x = np.ascontiguousarray(inp.values)
    w = np.ascontiguousarray(kernels.values)
    n_n, k2 = layer.in_ch, layer.kernel ** 2
    oh, ow, s = layer.out_h, layer.out_w, layer.stride
    acc = np.zeros((n_n, oh, ow), dtype=np.int64)
    ring_exec, _ = get_kernels(sim.backend)
    plan = ring_plan(layer, reuse=False)
    oy, ox, idx = _mac_steps(plan)
    side_h, side_w = _window(layer)
    _check_staging(sim, layer, [(0, oh)], min(t.tm, n_n), True)
    _check_wsram(sim, min(t.tm, n_n), k2)
    sink = _Output(sim, cnt, layer, shift, fuse, output_on_chip, count_dram=True)
    all_rows = _real_rows(layer, 0, side_h)
    ov = hw.pass_overhead_cycles
    for g in range(cdiv(n_n, t.tm)):
        c0, c1 = g * t.tm, min(n_n, (g + 1) * t.tm)
        c_e = c1 - c0
        base = sim.clock
        _load_weights(sim, cnt, c_e, k2, base)
        _stage_input(sim, cnt, layer, c_e, all_rows, True, 0 if input_on_chip else c_e * side_h * side_w, base)
        ring_exec(np.ascontiguousarray(x[c0:c1]), np.ascontiguousarray(w[c0:c1]), acc[c0:c1],
                  *plan.arrays(), s, plan.width, pe, True)
        _plan_counts(sim, cnt, plan, c_e, True)
        _trace_plan(sim, plan, base, range(c_e), True)
        cnt.active_mac_cycles += len(idx) * c_e * k2
        cnt.cycles += ov + plan.n_steps
        cnt.compute_cycles += plan.n_steps
        cnt.passes += 1
        sim.clock += ov + plan.n_steps
        completion = np.zeros((oh, ow), dtype=np.int64)
        completion[oy, ox] = base + ov + idx
        sink.group(c0, acc[c0:c1], completion, [(0, oh)], sim.clock)
    return _finish(sim, cnt, sink, inp, kernels, scale_exp)


# ---------------------------------------------------------------- pooling

def run_onfly_pool(sim: SimMachine, conv: QTensor, completion: np.ndarray | None = None, segs=None,
                   route: bool = True, record: bool = True):
    """2x2/2 max pooling on the convolution output stream.

    Pixels arrive in completion-cycle order (ring order, one per cycle, when
    `completion` is omitted). The first row of every quad is reduced pairwise and
    parked in the pooling FIFO; the second row completes the quad, so along that
    row one pooled pixel leaves every two cycles. Quads whose rows fall in
    different spatial segments park in the pooling-reuse SRAM instead.
    """
    hw = sim.hw
    v = conv.values
    c_n, oh, ow = v.shape
    if oh % 2 or ow % 2:
        raise ValueError(f"max pooling needs even dims, got {oh}x{ow}")
    cnt = sim.counters()
    order = schedule_ring(oh, ow)
    ring_idx = np.zeros((oh, ow), dtype=np.int64)
    for i, (y, x, _) in enumerate(order):
        ring_idx[y, x] = i
    if completion is None:
        completion = sim.clock + hw.pass_overhead_cycles + ring_idx
        standalone = True
    else:
        standalone = False
    seg_of = np.zeros(oh, dtype=np.int64)
    for si, (s0, n) in enumerate(segs or [(0, oh)]):
        seg_of[s0:s0 + n] = si
    stream = sorted(((int(completion[y, x]), int(ring_idx[y, x]), y, x) for y in range(oh) for x in range(ow)))
    best = np.full((c_n, oh // 2, ow // 2), -129, dtype=np.int16)
    seen = np.zeros((oh // 2, ow // 2), dtype=np.int64)
    out = np.zeros((c_n, oh // 2, ow // 2), dtype=np.int8)
    parked = 0
    spill_cap = hw.prsram_bytes // max(c_n, 1)
    spilled = 0
    in_prsram = np.zeros((oh // 2, ow // 2), dtype=bool)
    for cyc, _, y, x in stream:
        i, j = y // 2, x // 2
        np.maximum(best[:, i, j], v[:, y, x], out=best[:, i, j])
        seen[i, j] += 1
        if seen[i, j] == 2:
            # first row pair reduced; park it until the other row of the quad arrives
            if seg_of[2 * i] != seg_of[2 * i + 1] or parked >= hw.pool_fifo_entries:
                spilled += 1
                if spilled > spill_cap:
                    raise SimCapacityError("pooling-reuse SRAM overflow")
                in_prsram[i, j] = True
                cnt.rsram_writes += c_n
            else:
                parked += 1
        elif seen[i, j] == 4:
            if in_prsram[i, j]:
                cnt.rsram_reads += c_n
                spilled -= 1
            else:
                parked -= 1
            out[:, i, j] = best[:, i, j]
            cnt.pooled_pixels += c_n
            sim.event(cyc, "pool", "emit", f"{i}:{j}", c_n)
    if standalone:
        span = oh * ow + hw.pass_overhead_cycles
        cnt.cycles += span
        sim.clock += span
    if route:
        nbytes = out.size
        if nbytes <= hw.fsram_bytes_per_buffer:
            dst = sim.active ^ 1
            for c in range(c_n):
                np.add.at(cnt.fsram_writes[dst], sim.feature_bank(c, np.arange(oh // 2)), ow // 2)
            sim.event(sim.clock, "fsram", "write", f"buf{dst}", nbytes)
        else:
            cnt.dram("output", nbytes, write=True)
            sim.event(sim.clock, "dram", "write", "output", nbytes)
    if record:
        sim.finish(cnt)
    return QTensor(out, conv.scale_exp), cnt


# ---------------------------------------------------------------- network

def _host_pool(q: QTensor) -> QTensor:
    c, h, w = q.values.shape
    return QTensor(q.values.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4)), q.scale_exp)


def run_layer(sim: SimMachine, layer: LayerSpec, t: TilingChoice, inp: QTensor, kernels: QTensor, scale_exp: int,
              decomposed: bool = False, pool: bool = False, pe_shift: int | None = None,
              input_on_chip: bool = False, output_on_chip: bool = False):
    kw = dict(pool=pool, pe_shift=pe_shift, input_on_chip=input_on_chip, output_on_chip=output_on_chip)
    if layer.kind == "pointwise_conv":
        return run_pointwise(sim, layer, inp, kernels, scale_exp, t, **kw)
    if layer.kind == "depthwise_conv":
        return run_depthwise(sim, layer, inp, kernels, scale_exp, t, **kw)
    return run_standard_conv(sim, layer, t, inp, kernels, scale_exp, decomposed, **kw)


def run_network(sim: SimMachine, net: NetworkSpec, plan, inputs: QTensor, weights, shifts,
                ofp: bool | None = None, ppfs: bool | None = None, decomposed: bool | None = None):
    """Run every layer with ping-pong feature buffers.

    A product stays on chip (PPFS) when it fits one feature buffer and is not
    the network output; the next layer then reads it without DRAM traffic. With
    OFP, pooled layers fuse their pooling; otherwise the full map leaves the chip
    and is pooled on the host.
    """
    ofp = plan.ofp if ofp is None else ofp
    ppfs = plan.ppfs if ppfs is None else ppfs
    decomposed = plan.decomposed if decomposed is None else decomposed
    choices = plan.choices
    if len(choices) != len(net) or len(weights) != len(net) or len(shifts) != len(net):
        raise ValueError("plan, weights and shifts must cover every layer")
    per_layer = []
    cur = inputs
    resident = False
    last = len(net) - 1
    for i, (layer, t, w, sh) in enumerate(zip(net.layers, choices, weights, shifts)):
        fuse = ofp and layer.followed_by_pool
        out_bytes = layer.out_ch * layer.out_h * layer.out_w // (4 if fuse else 1)
        keep = ppfs and i < last and out_bytes <= sim.hw.fsram_bytes_per_buffer
        cur, cnt = run_layer(sim, layer, t, cur, w, sh, decomposed, fuse, None, resident, keep)
        if layer.followed_by_pool and not fuse:
            cur = _host_pool(cur)
        per_layer.append(cnt)
        resident = keep
        sim.flip()
    return cur, per_layer
