"""Analytical DRAM-traffic, cycle, utilization and throughput model.

Traffic per layer is the sum over the three operand streams of
(bytes moved per tiling pass) x (number of passes), at one byte per value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import ceil

from .network import LayerSpec, NetworkSpec
from .schedule import decompose_channels, split_rows

MB = 1 << 20

INPUT_REUSE = "input_reuse"
OUTPUT_REUSE = "output_reuse"
STRATEGIES = (INPUT_REUSE, OUTPUT_REUSE)


class TilingError(ValueError):
    pass


@dataclass(frozen=True)
class HardwareConfig:
    pea_rows: int = 32
    pea_cols: int = 4
    pes_per_pea: int = 9
    mac_budget: int | None = None
    fsram_bytes_per_buffer: int = 131072
    fsram_banks: int = 32
    wsram_bytes: int = 9216
    wsram_banks: int = 32
    rsram_bytes: int = 24576
    frsram_bytes: int = 16384
    prsram_bytes: int = 8192
    reuse_regs_per_array: int = 222
    pool_fifo_entries: int = 128
    clock_hz: float = 5.0e8
    # calibration constants, fitted to the published cycle tables
    pass_overhead_cycles: int = 2
    decomp_fill_rows: int = 2

    def __post_init__(self):
        physical = self.pea_rows * self.pea_cols * self.pes_per_pea
        if self.mac_budget is None:
            object.__setattr__(self, "mac_budget", physical)
        counts = (
            self.pea_rows, self.pea_cols, self.pes_per_pea, self.mac_budget, self.fsram_bytes_per_buffer,
            self.fsram_banks, self.wsram_bytes, self.wsram_banks, self.rsram_bytes,
            self.reuse_regs_per_array, self.pool_fifo_entries,
        )
        if any(c <= 0 for c in counts) or self.clock_hz <= 0:
            raise ValueError("hardware counts and clock must be positive")
        if self.mac_budget > physical:
            raise ValueError(f"mac_budget {self.mac_budget} exceeds the physical array ({physical} MACs)")
        if self.frsram_bytes + self.prsram_bytes != self.rsram_bytes:
            raise ValueError("reuse SRAM split must add up to rsram_bytes")
        if self.pass_overhead_cycles < 0 or self.decomp_fill_rows < 0:
            raise ValueError("calibration constants must be >= 0")

    @property
    def fsram_bank_bytes(self) -> int:
        return self.fsram_bytes_per_buffer // self.fsram_banks

    def with_overrides(self, **kw) -> "HardwareConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class TilingChoice:
    tm: int
    tn: int
    tsize: int = 1
    strategy: str = OUTPUT_REUSE

    def __post_init__(self):
        if self.tm < 1 or self.tn < 1 or self.tsize < 1:
            raise TilingError("tm, tn and tsize must be >= 1")
        if self.strategy not in STRATEGIES:
            raise TilingError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class AccessBreakdown:
    input_bytes: int
    weight_bytes: int
    output_bytes: int
    passes_in: int = 1
    passes_weight: int = 1
    passes_out: int = 1

    def __post_init__(self):
        if min(self.input_bytes, self.weight_bytes, self.output_bytes) < 0:
            raise ValueError("byte counts must be >= 0")
        if min(self.passes_in, self.passes_weight, self.passes_out) < 1:
            raise ValueError("pass counts must be >= 1")

    @property
    def total_bytes(self) -> int:
        return self.input_bytes + self.weight_bytes + self.output_bytes

    @property
    def mb(self) -> float:
        return self.total_bytes / MB

    def __add__(self, other: "AccessBreakdown") -> "AccessBreakdown":
        return AccessBreakdown(
            self.input_bytes + other.input_bytes,
            self.weight_bytes + other.weight_bytes,
            self.output_bytes + other.output_bytes,
        )


ZERO_ACCESS = AccessBreakdown(0, 0, 0)


@dataclass(frozen=True)
class PerfReport:
    cycles: int
    utilization: float
    gops: float
    latency_s: float


@dataclass(frozen=True)
class EnergyParams:
    power_w: float


@dataclass(frozen=True)
class NetworkAccess:
    layers: tuple[AccessBreakdown, ...]
    total: AccessBreakdown
    on_chip_boundaries: tuple[int, ...] = field(default_factory=tuple)


def cdiv(a: int, b: int) -> int:
    return -(-a // b)


def default_tiling(layer: LayerSpec, hw: HardwareConfig, strategy: str = OUTPUT_REUSE) -> TilingChoice:
    """The fixed array mapping for 1x1 and depthwise layers."""
    if layer.kind == "pointwise_conv":
        return TilingChoice(hw.pea_rows, hw.pea_rows, 1, strategy)
    if layer.kind == "depthwise_conv":
        return TilingChoice(hw.pea_rows, 1, 1, strategy)
    return TilingChoice(hw.pea_rows, hw.pea_cols, 1, strategy)


def check_tiling(layer: LayerSpec, t: TilingChoice, hw: HardwareConfig) -> None:
    k2 = layer.kernel * layer.kernel
    if layer.kind == "depthwise_conv":
        if t.tn != 1:
            raise TilingError("depthwise tiling uses one input channel per PEA (tn = 1)")
        if t.tm > hw.pea_rows or t.tm * k2 > hw.mac_budget:
            raise TilingError(f"depthwise tm={t.tm} exceeds the PEA rows or MAC budget")
        return
    tn_cap = hw.pea_rows if layer.kind == "pointwise_conv" else hw.pea_cols
    if t.tm > hw.pea_rows or t.tn > tn_cap:
        raise TilingError(f"tiling ({t.tm}, {t.tn}) exceeds the array shape")
    if t.tm * t.tn * k2 > hw.mac_budget:
        raise TilingError(f"tiling ({t.tm}, {t.tn}) x K^2 = {t.tm * t.tn * k2} exceeds MAC budget {hw.mac_budget}")


def _window(layer: LayerSpec) -> tuple[int, int, int, int]:
    """(side_h, side_w, out_h, out_w); side = S*F + K - S per axis."""
    oh, ow = layer.out_h, layer.out_w
    s, k = layer.stride, layer.kernel
    return s * oh + k - s, s * ow + k - s, oh, ow


def _out_slice(oh: int, ow: int, tm: int, pooled: bool) -> int:
    return oh * ow * tm // 4 if pooled else oh * ow * tm


def access_output_reuse(layer: LayerSpec, t: TilingChoice, hw: HardwareConfig | None = None,
                        pooled: bool = False) -> AccessBreakdown:
    hw = hw or HardwareConfig()
    check_tiling(layer, t, hw)
    side_h, side_w, oh, ow = _window(layer)
    k2 = layer.kernel * layer.kernel
    if layer.kind == "depthwise_conv":
        groups = cdiv(layer.in_ch, t.tm)
        return AccessBreakdown(
            t.tm * side_h * side_w * groups, k2 * t.tm * groups, _out_slice(oh, ow, t.tm, pooled) * groups,
            groups, groups, groups,
        )
    mp, np_ = cdiv(layer.out_ch, t.tm), cdiv(layer.in_ch, t.tn)
    return AccessBreakdown(
        input_bytes=t.tn * side_h * side_w * mp * np_,
        weight_bytes=k2 * t.tm * t.tn * mp * np_,
        output_bytes=_out_slice(oh, ow, t.tm, pooled) * mp,
        passes_in=mp * np_,
        passes_weight=mp * np_,
        passes_out=mp,
    )


def access_input_reuse(layer: LayerSpec, t: TilingChoice, hw: HardwareConfig | None = None,
                       pooled: bool = False) -> AccessBreakdown:
    hw = hw or HardwareConfig()
    check_tiling(layer, t, hw)
    if layer.kind == "depthwise_conv":
        # no cross-channel partial sums to spill
        return access_output_reuse(layer, t, hw, pooled)
    side_h, side_w, oh, ow = _window(layer)
    k2 = layer.kernel * layer.kernel
    mp, np_ = cdiv(layer.out_ch, t.tm), cdiv(layer.in_ch, t.tn)
    return AccessBreakdown(
        input_bytes=t.tn * side_h * side_w * np_,
        weight_bytes=k2 * t.tm * t.tn * mp * np_,
        output_bytes=_out_slice(oh, ow, t.tm, pooled) * 2 * np_ * mp,
        passes_in=np_,
        passes_weight=mp * np_,
        passes_out=2 * np_ * mp,
    )


def access_for(layer: LayerSpec, t: TilingChoice, hw: HardwareConfig | None = None,
               pooled: bool = False) -> AccessBreakdown:
    if t.strategy == INPUT_REUSE:
        return access_input_reuse(layer, t, hw, pooled)
    return access_output_reuse(layer, t, hw, pooled)


def access_no_reuse(layer: LayerSpec) -> int:
    """Every MAC fetches both operands from DRAM; each output is written once."""
    return 2 * layer.macs + layer.out_h * layer.out_w * layer.out_ch


def network_access(net: NetworkSpec, plan, ofp: bool = False, ppfs: bool = False,
                   hw: HardwareConfig | None = None) -> NetworkAccess:
    hw = hw or HardwareConfig()
    plan = list(plan)
    if len(plan) != len(net.layers):
        raise ValueError(f"plan has {len(plan)} tilings for {len(net.layers)} layers")
    per = [access_for(l, t, hw, pooled=ofp and l.followed_by_pool) for l, t in zip(net.layers, plan)]
    on_chip = []
    if ppfs:
        per = list(per)
        for i in range(len(per) - 1):
            if per[i].output_bytes <= hw.fsram_bytes_per_buffer:
                on_chip.append(i)
        for i in on_chip:
            per[i] = replace(per[i], output_bytes=0)
            per[i + 1] = replace(per[i + 1], input_bytes=0)
    total = ZERO_ACCESS
    for a in per:
        total = total + a
    return NetworkAccess(tuple(per), total, tuple(on_chip))


def choose_tsize(layer: LayerSpec, hw: HardwareConfig | None = None) -> int:
    """Smallest power of two whose per-channel input segment fits one FSRAM bank."""
    hw = hw or HardwareConfig()
    t = 1
    while cdiv(layer.in_h, t) * layer.in_w > hw.fsram_bank_bytes and t < layer.out_h:
        t *= 2
    return min(t, layer.out_h)


def uses_decomposition(layer: LayerSpec, decomposed: bool, hw: HardwareConfig) -> bool:
    return decomposed and layer.kind == "standard_conv" and layer.in_ch < hw.pea_cols


def decomposed_column_cycles(layer: LayerSpec, tsize: int, hw: HardwareConfig) -> list[int]:
    """Per-PEA-column busy cycles for one output-channel group under channel decomposition."""
    segs = split_rows(layer.out_h, tsize)
    tasks = decompose_channels(layer.in_ch, len(segs), hw.pea_cols)
    ow = layer.out_w
    return [sum(segs[s][1] * ow + hw.decomp_fill_rows * ow for _, s in col) for col in tasks]


def cycles_for_layer(layer: LayerSpec, t: TilingChoice, decomposed: bool = False,
                     hw: HardwareConfig | None = None) -> int:
    hw = hw or HardwareConfig()
    check_tiling(layer, t, hw)
    pix = layer.out_h * layer.out_w
    per_pass = pix + hw.pass_overhead_cycles
    if layer.kind == "depthwise_conv":
        return cdiv(layer.in_ch, t.tm) * per_pass
    mp = cdiv(layer.out_ch, t.tm)
    if uses_decomposition(layer, decomposed, hw):
        tsize = t.tsize if t.tsize > 1 else choose_tsize(layer, hw)
        return mp * max(decomposed_column_cycles(layer, tsize, hw))
    return mp * cdiv(layer.in_ch, t.tn) * per_pass


def utilization(layer: LayerSpec, t: TilingChoice, decomposed: bool = False,
                hw: HardwareConfig | None = None) -> float:
    hw = hw or HardwareConfig()
    return layer.macs / (hw.mac_budget * cycles_for_layer(layer, t, decomposed, hw))


def performance(util: float, hw: HardwareConfig | None = None) -> float:
    """Throughput in Gops: two ops (multiply + add) per active MAC per cycle."""
    hw = hw or HardwareConfig()
    if not 0.0 <= util <= 1.0:
        raise ValueError(f"utilization {util} outside [0, 1]")
    return 2 * hw.mac_budget * util * hw.clock_hz / 1e9


def energy_efficiency(perf_gops: float, e: EnergyParams) -> float:
    """Tops/W."""
    if e.power_w <= 0:
        raise ValueError("power must be positive")
    return perf_gops / 1000.0 / e.power_w


def layer_perf(layer: LayerSpec, t: TilingChoice, decomposed: bool = False,
               hw: HardwareConfig | None = None) -> PerfReport:
    hw = hw or HardwareConfig()
    cyc = cycles_for_layer(layer, t, decomposed, hw)
    util = layer.macs / (hw.mac_budget * cyc)
    return PerfReport(cyc, util, performance(util, hw), cyc / hw.clock_hz)


def padding_note(layer: LayerSpec) -> str | None:
    """The closed forms encode padding as K - S; flag layers where 2P differs."""
    if layer.kind == "standard_conv" and 2 * layer.pad != layer.kernel - layer.stride:
        return (f"{layer.name}: 2P={2 * layer.pad} != K-S={layer.kernel - layer.stride}; "
                f"input window taken as S*F+K-S={_window(layer)[0]} rows")
    return None
