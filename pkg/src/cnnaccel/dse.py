"""Tiling-factor search under the MAC budget."""

from __future__ import annotations

from dataclasses import dataclass

from . import costmodel as cm
from .costmodel import HardwareConfig, TilingChoice, OUTPUT_REUSE, INPUT_REUSE
from .network import LayerSpec, NetworkSpec


class NoFeasibleTiling(ValueError):
    pass


def enumerate_tilings(layer: LayerSpec, hw: HardwareConfig | None = None,
                      strategy: str = OUTPUT_REUSE) -> list[TilingChoice]:
    hw = hw or HardwareConfig()
    k2 = layer.kernel * layer.kernel
    tsize = cm.choose_tsize(layer, hw)
    if layer.kind == "depthwise_conv":
        return [TilingChoice(tm, 1, tsize, strategy)
                for tm in range(1, hw.pea_rows + 1) if tm * k2 <= hw.mac_budget]
    tn_cap = hw.pea_rows if layer.kind == "pointwise_conv" else hw.pea_cols
    return [
        TilingChoice(tm, tn, tsize, strategy)
        for tm in range(1, hw.pea_rows + 1)
        for tn in range(1, tn_cap + 1)
        if tm * tn * k2 <= hw.mac_budget
    ]


def _objective(layer, t, hw):
    # max throughput == min cycles (MAC count is fixed per layer); then least traffic
    return (cm.cycles_for_layer(layer, t, False, hw), cm.access_for(layer, t, hw).total_bytes, t.tm, t.tn)


def select_optimal(layer: LayerSpec, hw: HardwareConfig | None = None,
                   strategy: str = OUTPUT_REUSE) -> TilingChoice:
    hw = hw or HardwareConfig()
    cands = enumerate_tilings(layer, hw, strategy)
    if not cands:
        raise NoFeasibleTiling(f"{layer.name}: no tiling fits MAC budget {hw.mac_budget}")
    return min(cands, key=lambda t: _objective(layer, t, hw))


@dataclass(frozen=True)
class DsePlan:
    network: NetworkSpec
    choices: tuple[TilingChoice, ...]
    perf: tuple[cm.PerfReport, ...]
    access: cm.NetworkAccess
    hw: HardwareConfig
    strategy: str
    ofp: bool
    ppfs: bool
    decomposed: bool

    def __len__(self):
        return len(self.choices)

    @property
    def total_cycles(self) -> int:
        return sum(p.cycles for p in self.perf)

    @property
    def total_bytes(self) -> int:
        return self.access.total.total_bytes

    @property
    def latency_s(self) -> float:
        return self.total_cycles / self.hw.clock_hz

    @property
    def utilization(self) -> float:
        return self.network.macs / (self.hw.mac_budget * self.total_cycles)


def plan_network(net: NetworkSpec, hw: HardwareConfig | None = None, strategy: str = OUTPUT_REUSE,
                 ofp: bool = False, ppfs: bool = False, decomposed: bool = False,
                 overrides: dict | None = None) -> DsePlan:
    """Per-layer optimal tiling, then network-wide traffic with OFP/PPFS applied.

    `overrides` maps layer index -> TilingChoice to pin a layer.
    """
    hw = hw or HardwareConfig()
    overrides = overrides or {}
    choices = tuple(overrides.get(i) or select_optimal(l, hw, strategy) for i, l in enumerate(net.layers))
    perf = tuple(cm.layer_perf(l, t, decomposed, hw) for l, t in zip(net.layers, choices))
    access = cm.network_access(net, choices, ofp, ppfs, hw)
    return DsePlan(net, choices, perf, access, hw, strategy, ofp, ppfs, decomposed)


@dataclass(frozen=True)
class StrategyRow:
    name: str
    total_bytes: int
    ratio: float

    @property
    def mb(self) -> float:
        return self.total_bytes / cm.MB


STRATEGY_ROWS = (
    "no_reuse", "input_reuse", "output_reuse", "input_reuse+ofp", "output_reuse+ofp", "output_reuse+ofp+ppfs",
)


def compare_strategies(net: NetworkSpec, hw: HardwareConfig | None = None) -> list[StrategyRow]:
    hw = hw or HardwareConfig()
    base = sum(cm.access_no_reuse(l) for l in net.layers)
    totals = {"no_reuse": base}
    for name in STRATEGY_ROWS[1:]:
        parts = name.split("+")
        strategy = INPUT_REUSE if parts[0] == "input_reuse" else OUTPUT_REUSE
        plan = plan_network(net, hw, strategy, ofp="ofp" in parts, ppfs="ppfs" in parts)
        totals[name] = plan.total_bytes
    return [StrategyRow(n, totals[n], base / totals[n] if totals[n] else float("inf")) for n in STRATEGY_ROWS]
