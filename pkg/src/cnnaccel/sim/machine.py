"""Machine state, event counters and trace output."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from ..costmodel import HardwareConfig
from ._jit import resolve_backend


class SimCapacityError(RuntimeError):
    """An on-chip memory would overflow; the tiler has to split further."""


def _banks(n=32):
    return np.zeros(n, dtype=np.int64)


@dataclass
class SimCounters:
    cycles: int = 0
    compute_cycles: int = 0
    dram_read_bytes: int = 0
    dram_write_bytes: int = 0
    dram_input_bytes: int = 0
    dram_weight_bytes: int = 0
    dram_output_bytes: int = 0
    fsram_reads: np.ndarray = field(default_factory=lambda: np.zeros((2, 32), dtype=np.int64))
    fsram_writes: np.ndarray = field(default_factory=lambda: np.zeros((2, 32), dtype=np.int64))
    fsram_row_accesses: int = 0
    wsram_reads: np.ndarray = field(default_factory=_banks)
    wsram_writes: np.ndarray = field(default_factory=_banks)
    weight_load_cycles: int = 0
    rsram_reads: int = 0
    rsram_writes: int = 0
    reuse_reg_hits: int = 0
    reuse_reg_writes: int = 0
    halo_pixels: int = 0
    active_mac_cycles: int = 0
    pooled_pixels: int = 0
    passes: int = 0

    @classmethod
    def for_hw(cls, hw: HardwareConfig) -> "SimCounters":
        return cls(fsram_reads=np.zeros((2, hw.fsram_banks), dtype=np.int64),
                   fsram_writes=np.zeros((2, hw.fsram_banks), dtype=np.int64),
                   wsram_reads=np.zeros(hw.wsram_banks, dtype=np.int64),
                   wsram_writes=np.zeros(hw.wsram_banks, dtype=np.int64))

    @property
    def dram_bytes(self) -> int:
        return self.dram_read_bytes + self.dram_write_bytes

    def dram(self, stream: str, nbytes: int, write: bool = False) -> None:
        if nbytes < 0:
            raise ValueError("negative byte count")
        setattr(self, f"dram_{stream}_bytes", getattr(self, f"dram_{stream}_bytes") + nbytes)
        if write:
            self.dram_write_bytes += nbytes
        else:
            self.dram_read_bytes += nbytes

    def utilization(self, mac_budget: int) -> float:
        return self.active_mac_cycles / (mac_budget * self.cycles) if self.cycles else 0.0

    def array_utilization(self, mac_budget: int) -> float:
        """Active MACs over compute cycles only (pass overheads excluded)."""
        return self.active_mac_cycles / (mac_budget * self.compute_cycles) if self.compute_cycles else 0.0

    def __iadd__(self, other: "SimCounters") -> "SimCounters":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else int(v)
        return out


class TraceWriter:
    """Line-oriented event log: cycle,unit,op,where,bytes. Stable-sorted by cycle on output."""

    def __init__(self):
        self._events = []

    def __len__(self):
        return len(self._events)

    def emit(self, cycle: int, unit: str, op: str, where, nbytes: int) -> None:
        self._events.append((int(cycle), len(self._events), unit, op, str(where), int(nbytes)))

    def lines(self) -> list[str]:
        return [f"{c},{u},{o},{w},{b}" for c, _, u, o, w, b in sorted(self._events)]

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line + "\n")


def parse_trace(lines) -> list[tuple[int, str, str, str, int]]:
    out = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        c, u, o, w, b = line.split(",")
        out.append((int(c), u, o, w, int(b)))
    return out


class SimMachine:
    """Accelerator instance: config, ping-pong feature buffers, global clock, running totals.

    The feature SRAM pair alternates per layer: a layer reads buffer `active`
    and writes its products into the other one.
    """

    def __init__(self, hw: HardwareConfig | None = None, backend: str | None = None,
                 reuse_regs: bool = True, trace: bool = False):
        self.hw = hw or HardwareConfig()
        self.backend = resolve_backend(backend)
        self.reuse_regs = reuse_regs
        self.trace = TraceWriter() if trace else None
        self.clock = 0
        self.active = 0
        self.totals = SimCounters.for_hw(self.hw)

    def counters(self) -> SimCounters:
        return SimCounters.for_hw(self.hw)

    def feature_bank(self, ch: int, row, channel_major: bool = False):
        """Bank of pixel row `row` of staged channel `ch`.

        Spatial layers stagger channels by 8 rows so the up-to-4 column channels
        and three window rows never share a bank; channel-parallel layers
        (1x1, depthwise) put neighbouring channels in neighbouring banks.
        """
        stride = 1 if channel_major else 8
        return (row + stride * ch) % self.hw.fsram_banks

    def finish(self, cnt: SimCounters) -> SimCounters:
        self.totals += cnt
        return cnt

    def flip(self) -> None:
        self.active ^= 1

    def event(self, cycle, unit, op, where, nbytes) -> None:
        if self.trace is not None:
            self.trace.emit(cycle, unit, op, where, nbytes)
