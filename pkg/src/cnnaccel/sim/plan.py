"""Static per-pass step programs for the ring dataflow.

A plan lists, for every step of one PEA column, how the 3x3 window registers
move and where each newly needed pixel comes from. It depends only on the layer
geometry, so it is built once in Python and replayed by either backend for
every column and every tiling pass.

Coordinates in ops are padded-map coordinates except FSRAM sources, which are
real (row, col) of the staged input. Zero padding never appears as an FSRAM op:
halo positions are synthesized (SRC_HALO).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..network import LayerSpec
from ..schedule import schedule_ring, UP

# op sources
SRC_FSRAM, SRC_HALO, SRC_REUSE, SRC_FRSRAM, SRC_WIN = 0, 1, 2, 3, 4
# op destinations
DST_WIN, DST_REUSE, DST_FRSRAM = 0, 1, 2
# window moves
MOVE_NONE, MOVE_LOAD, MOVE_RIGHT, MOVE_LEFT, MOVE_UP = 0, 1, 2, 3, 4


@dataclass(frozen=True, eq=False)
class RingPlan:
    kernel: int
    stride: int
    pad: int
    width: int          # padded columns touched by the window
    move: np.ndarray
    oy: np.ndarray
    ox: np.ndarray
    mac: np.ndarray
    label: tuple
    op_off: np.ndarray
    op_src: np.ndarray
    op_sa: np.ndarray
    op_sb: np.ndarray
    op_dst: np.ndarray
    op_da: np.ndarray
    op_db: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.move)

    @property
    def compute_steps(self) -> int:
        return int(self.mac.sum())

    def count_src(self, src: int) -> int:
        return int(np.count_nonzero(self.op_src == src))

    def count_dst(self, dst: int) -> int:
        return int(np.count_nonzero((self.op_dst == dst) & (self.op_src == SRC_WIN)))

    @property
    def fsram_reads(self) -> int:
        return self.count_src(SRC_FSRAM)

    @property
    def halo_pixels(self) -> int:
        return self.count_src(SRC_HALO)

    @property
    def reuse_hits(self) -> int:
        return self.count_src(SRC_REUSE)

    @property
    def reuse_writes(self) -> int:
        return int(np.count_nonzero(self.op_dst == DST_REUSE))

    @property
    def frsram_reads(self) -> int:
        return self.count_src(SRC_FRSRAM)

    @property
    def frsram_writes(self) -> int:
        return int(np.count_nonzero(self.op_dst == DST_FRSRAM))

    def step_ops(self, step: int) -> range:
        return range(int(self.op_off[step]), int(self.op_off[step + 1]))

    def fsram_rows(self) -> np.ndarray:
        return self.op_sa[self.op_src == SRC_FSRAM]

    def fsram_per_step(self) -> np.ndarray:
        step_of = np.repeat(np.arange(self.n_steps), np.diff(self.op_off))
        return np.bincount(step_of[self.op_src == SRC_FSRAM], minlength=self.n_steps)

    def dppr_row_accesses(self) -> int:
        """Bank-row reads with two horizontally adjacent pixels per row."""
        total = 0
        for st in range(self.n_steps):
            sl = slice(int(self.op_off[st]), int(self.op_off[st + 1]))
            sel = self.op_src[sl] == SRC_FSRAM
            words = set(zip(self.op_sa[sl][sel].tolist(), (self.op_sb[sl][sel] // 2).tolist()))
            total += len(words)
        return total

    def arrays(self):
        """Positional arguments shared by the executor kernels."""
        return (self.move, self.oy, self.ox, self.mac, self.op_off,
                self.op_src, self.op_sa, self.op_sb, self.op_dst, self.op_da, self.op_db)


class _Builder:
    def __init__(self):
        self.steps = []
        self.ops = []
        self.off = [0]

    def step(self, move, oy, ox, mac, label):
        if self.steps:
            self.off.append(len(self.ops))
        self.steps.append((move, oy, ox, mac, label))

    def op(self, src, sa, sb, dst, da, db):
        self.ops.append((src, sa, sb, dst, da, db))

    def build(self, k, s, p, width) -> RingPlan:
        self.off.append(len(self.ops))
        st = np.array([x[:4] for x in self.steps], dtype=np.int64).reshape(-1, 4)
        ops = np.array(self.ops, dtype=np.int64).reshape(-1, 6)
        col = lambda a, i: np.ascontiguousarray(a[:, i])
        return RingPlan(
            k, s, p, width,
            col(st, 0), col(st, 1), col(st, 2), col(st, 3), tuple(x[4] for x in self.steps),
            np.array(self.off, dtype=np.int64),
            col(ops, 0), col(ops, 1), col(ops, 2), col(ops, 3), col(ops, 4), col(ops, 5),
        )


def ring_plan(layer: LayerSpec, row_start: int = 0, row_count: int | None = None,
              seg_starts=(), reuse: bool = True, primed: bool = False) -> RingPlan:
    """Step program for output rows [row_start, row_start + row_count).

    reuse: keep the K-S overlap rows in the per-column reuse register arrays so a
        lateral step fetches only the bottom S rows of its new columns.
    seg_starts: output rows where a new spatial segment begins; the overlap rows
        for those rows come from the feature-reuse SRAM instead of the registers.
    primed: the overlap rows of the first row are preloaded into the reuse
        arrays before the first step (used by decomposed tasks).
    """
    k, s, p = layer.kernel, layer.stride, layer.pad
    if k < 2:
        raise ValueError("ring plans need K > 1; 1x1 layers use the pointwise path")
    if primed and not reuse:
        raise ValueError("a primed plan needs reuse registers")
    oh, ow = layer.out_h, layer.out_w
    cnt = oh - row_start if row_count is None else row_count
    if row_start < 0 or cnt < 1 or row_start + cnt > oh:
        raise ValueError("row range outside the output map")
    h, w = layer.in_h, layer.in_w
    r = k - s                       # overlap rows between consecutive output rows
    width = s * (ow - 1) + k
    bounds = {y for y in seg_starts if row_start < y < row_start + cnt}

    def src(pr, pc):
        rr, cc = pr - p, pc - p
        if 0 <= rr < h and 0 <= cc < w:
            return SRC_FSRAM, rr, cc
        return SRC_HALO, pr, pc

    b = _Builder()
    if primed:
        b.step(MOVE_NONE, -1, -1, 0, "prime")
        for j in range(r):
            for pc in range(width):
                b.op(*src(row_start * s + j, pc), DST_REUSE, j, pc)

    for ly, x, shift in schedule_ring(cnt, ow):
        y = row_start + ly
        top, left = y * s, x * s
        ovl = SRC_FRSRAM if y in bounds else SRC_REUSE
        first = ly == 0 and x == 0
        if first:
            b.step(MOVE_LOAD, y, x, 1, "front")
            for wr in range(k):
                for wc in range(k):
                    if primed and wr < r:
                        b.op(SRC_REUSE, wr, left + wc, DST_WIN, wr, wc)
                    else:
                        b.op(*src(top + wr, left + wc), DST_WIN, wr, wc)
            store_cols = range(k)
        elif shift == UP:
            b.step(MOVE_UP, y, x, 1, shift)
            for wr in range(r, k):
                for wc in range(k):
                    b.op(*src(top + wr, left + wc), DST_WIN, wr, wc)
            store_cols = range(k)
        else:
            rightward = ly % 2 == 0
            b.step(MOVE_RIGHT if rightward else MOVE_LEFT, y, x, 1, shift)
            store_cols = range(k - s, k) if rightward else range(s)
            from_regs = reuse and (ly > 0 or primed)
            for wc in store_cols:
                for wr in range(k):
                    if from_regs and wr < r:
                        b.op(ovl if ly > 0 else SRC_REUSE, wr, left + wc, DST_WIN, wr, wc)
                    else:
                        b.op(*src(top + wr, left + wc), DST_WIN, wr, wc)
        if reuse and ly + 1 < cnt:
            dst = DST_FRSRAM if (y + 1) in bounds else DST_REUSE
            for wc in store_cols:
                for j in range(r):
                    b.op(SRC_WIN, s + j, wc, dst, j, left + wc)
    return b.build(k, s, p, width)


def steady_reads_per_pixel(plan: RingPlan, layer: LayerSpec) -> float:
    """FSRAM pixel reads per lateral step on rows whose window lies fully inside the map."""
    reads = plan.fsram_per_step()
    s, k, p = layer.stride, layer.kernel, layer.pad
    sel = []
    for st in range(plan.n_steps):
        if plan.label[st] not in ("right", "left"):
            continue
        top, left = plan.oy[st] * s - p, plan.ox[st] * s - p
        if top >= 0 and top + k <= layer.in_h and left >= 0 and left + k <= layer.in_w:
            sel.append(st)
    if not sel:
        raise ValueError("layer has no steady-state lateral steps")
    return float(reads[sel].mean())
