"""Command line: analyze, dse, simulate, builtins."""

from __future__ import annotations

import argparse
import contextlib
import json
import re
import sys

import numpy as np

from . import costmodel as cm
from .dse import plan_network, compare_strategies, NoFeasibleTiling
from .network import BUILTINS, LayerSpec, NetworkSpec, NetworkValidationError, resolve_network
from .oracle import conv2d_ref, depthwise_ref, maxpool_ref, network_ref
from .qtensor import QTensor
from .report import build_report, emit, strategy_table, NONE
from .sim import SimMachine, SimCapacityError, ring_plan, run_layer, run_network, steady_reads_per_pixel

STRATEGY = {"none": NONE, "input": cm.INPUT_REUSE, "output": cm.OUTPUT_REUSE}
LAYER_RE = re.compile(r"^(\d+)x(\d+)x(\d+)x(\d+)k(\d+)s(\d+)p(\d+)((?:pool|dw)*)$")


class CliError(Exception):
    pass


def parse_layer(text: str) -> LayerSpec:
    """HxWxNxMkKsSpP with optional 'pool' and 'dw' suffixes, e.g. 16x16x4x32k3s1p1pool."""
    m = LAYER_RE.match(text.strip().lower())
    if not m:
        raise CliError(f"bad --layer {text!r}; expected HxWxNxMkKsSpP[pool][dw]")
    h, w, n, mm, k, s, p = (int(g) for g in m.groups()[:7])
    flags = m.group(8)
    kind = "depthwise_conv" if "dw" in flags else ("pointwise_conv" if k == 1 else "standard_conv")
    return LayerSpec("layer", kind, h, w, n, mm, k, s, p, "pool" in flags)


def _hw(args) -> cm.HardwareConfig:
    kw = {"clock_hz": args.clock_mhz * 1e6}
    if args.mac_budget is not None:
        kw["mac_budget"] = args.mac_budget
    return cm.HardwareConfig(**kw)


def _plan(args, net: NetworkSpec, hw: cm.HardwareConfig):
    strategy = STRATEGY[args.strategy]
    search = cm.OUTPUT_REUSE if strategy == NONE else strategy
    overrides = None
    if args.tm is not None or args.tn is not None:
        overrides = {}
        for i, layer in enumerate(net.layers):
            base = cm.default_tiling(layer, hw, search)
            t = cm.TilingChoice(args.tm or base.tm, args.tn or base.tn, cm.choose_tsize(layer, hw), search)
            if layer.kind == "depthwise_conv":
                t = cm.TilingChoice(args.tm or base.tm, 1, 1, search)
            cm.check_tiling(layer, t, hw)
            overrides[i] = t
    return plan_network(net, hw, search, ofp=args.ofp, ppfs=args.ppfs, decomposed=args.decompose,
                        overrides=overrides)


def cmd_analyze(args) -> int:
    hw = _hw(args)
    net = resolve_network(args.network)
    plan = _plan(args, net, hw)
    rep = build_report(plan, STRATEGY[args.strategy])
    print(emit(rep, args.format), end="" if args.format == "csv" else "\n")
    if args.compare:
        print(strategy_table(compare_strategies(net, hw), net.name))
    for layer in net.layers:
        note = cm.padding_note(layer)
        if note and args.format == "table":
            print(f"  * {note}")
    return 0


def cmd_dse(args) -> int:
    hw = _hw(args)
    net = resolve_network(args.network)
    plan = _plan(args, net, hw)
    rep = build_report(plan, STRATEGY[args.strategy])
    if args.format == "table":
        print(f"{net.name}: optimal tilings (mac budget {hw.mac_budget})")
        for r in rep.rows[:-1]:
            print(f"  {r.layer:<8} Tm={r.tm:<3} Tn={r.tn:<3} cycles={r.cycles:<9} GOPs={r.gops:8.2f}  MB={r.mb:.6f}")
        tot = rep.total()
        print(f"  total    cycles={tot.cycles}  MB={tot.mb:.6f}")
        for n in rep.notes:
            print(f"  * {n}")
    else:
        print(emit(rep, args.format), end="" if args.format == "csv" else "\n")
    return 0


def cmd_builtins(args) -> int:
    for name in sorted(BUILTINS):
        net = BUILTINS[name]()
        print(f"{name:<14}{len(net):>4} layers{net.macs:>16,} MACs")
    return 0


# ---------------------------------------------------------------- simulate

def default_shift(layer: LayerSpec) -> int:
    """Requantization shift that keeps random int8 outputs mostly unsaturated."""
    terms = layer.kernel ** 2 * (1 if layer.kind == "depthwise_conv" else layer.in_ch)
    return 7 + (terms.bit_length() + 1) // 2


def random_kernels(layer: LayerSpec, rng) -> QTensor:
    n = 1 if layer.kind == "depthwise_conv" else layer.in_ch
    return QTensor.random((layer.out_ch, n, layer.kernel, layer.kernel), rng)


def _divisible(layer: LayerSpec, t: cm.TilingChoice) -> bool:
    if layer.kind == "depthwise_conv":
        return layer.in_ch % t.tm == 0
    return layer.out_ch % t.tm == 0 and layer.in_ch % t.tn == 0


def _ref(layer, x, w, shift):
    if layer.kind == "depthwise_conv":
        return depthwise_ref(x, w, layer, shift)
    return conv2d_ref(x, w, layer, shift)


class Checks:
    def __init__(self):
        self.results = []

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.results.append((name, bool(ok)))
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))

    @property
    def ok(self) -> bool:
        return all(ok for _, ok in self.results)


def _simulate_layer(args, hw, checks: Checks, sim: SimMachine):
    layer = parse_layer(args.layer)
    strategy = STRATEGY[args.strategy]
    if strategy == NONE:
        raise CliError("simulate needs a reuse strategy (input or output)")
    if layer.macs > args.max_macs:
        raise CliError(f"layer has {layer.macs:,} MACs, above --max-macs {args.max_macs:,.0f}")
    net = NetworkSpec("cli", (layer,))
    plan = _plan(args, net, hw)
    t = plan.choices[0]
    rng = np.random.default_rng(args.seed)
    x = QTensor.random((layer.in_ch, layer.in_h, layer.in_w), rng)
    w = random_kernels(layer, rng)
    shift = default_shift(layer)
    fuse = layer.followed_by_pool and args.ofp
    out, cnt = run_layer(sim, layer, t, x, w, shift, args.decompose, fuse)
    ref = _ref(layer, x, w, shift)
    if fuse:
        ref = maxpool_ref(ref)
    checks.add("oracle equivalence", out == ref, f"{out.values.size} values")
    want_cyc = cm.cycles_for_layer(layer, t, args.decompose, hw)
    checks.add("cycles vs closed form", cnt.cycles == want_cyc, f"{cnt.cycles} vs {want_cyc}")
    decomposed = cm.uses_decomposition(layer, args.decompose, hw)
    if _divisible(layer, t) and not decomposed:
        want = cm.access_for(layer, t, hw, pooled=fuse).total_bytes
        checks.add("DRAM bytes vs closed form", cnt.dram_bytes == want, f"{cnt.dram_bytes} vs {want}")
    else:
        print("SKIP DRAM reconciliation (non-divisible tiling or decomposed layer)")
    if layer.kind == "standard_conv":
        try:
            on = steady_reads_per_pixel(ring_plan(layer, reuse=True), layer)
            off = steady_reads_per_pixel(ring_plan(layer, reuse=False), layer)
        except ValueError as e:
            print(f"SKIP reuse ratio ({e})")
        else:
            ratio = off / on
            want = layer.kernel / layer.stride
            got = off if args.disable_reuse_regs else on
            checks.add("steady-row FSRAM reads ratio", abs(ratio - want) < 1e-12,
                       f"{got:g} reads/pixel/column; disabled/enabled = {ratio:g} (expected {want:g}, "
                       f"{1 - 1 / ratio:.1%} reduction)")
    return [cnt]


def _simulate_network(args, hw, checks: Checks, sim: SimMachine):
    net = resolve_network(args.network)
    if net.macs > args.max_macs:
        raise CliError(f"{net.name} has {net.macs:,} MACs, above --max-macs {args.max_macs:,.0f}")
    strategy = STRATEGY[args.strategy]
    if strategy == NONE:
        raise CliError("simulate needs a reuse strategy (input or output)")
    plan = _plan(args, net, hw)
    rng = np.random.default_rng(args.seed)
    first = net.layers[0]
    x = QTensor.random((first.in_ch, first.in_h, first.in_w), rng)
    ws = [random_kernels(l, rng) for l in net.layers]
    shifts = [default_shift(l) for l in net.layers]
    out, per = run_network(sim, net, plan, x, ws, shifts)
    ref = network_ref(net, x, ws, shifts)[-1]
    checks.add("oracle equivalence", out == ref, f"{net.name}, {len(net)} layers")
    cyc = [c.cycles for c in per]
    want = [p.cycles for p in plan.perf]
    checks.add("cycles vs closed form", cyc == want, f"{sum(cyc)} vs {sum(want)}")
    dec = any(cm.uses_decomposition(l, plan.decomposed, hw) for l in net.layers)
    if all(_divisible(l, t) for l, t in zip(net.layers, plan.choices)) and not dec:
        got = [c.dram_bytes for c in per]
        exp = [a.total_bytes for a in plan.access.layers]
        checks.add("DRAM bytes vs closed form", got == exp, f"{sum(got)} vs {sum(exp)}")
    else:
        print("SKIP DRAM reconciliation (non-divisible tiling or decomposed layer)")
    return per


def cmd_simulate(args) -> int:
    hw = _hw(args)
    sim = SimMachine(hw, backend=args.backend, reuse_regs=not args.disable_reuse_regs, trace=bool(args.trace))
    checks = Checks()
    # keep stdout parseable in json mode: check lines go to stderr
    with contextlib.redirect_stdout(sys.stderr if args.format == "json" else sys.stdout):
        if args.layer:
            per = _simulate_layer(args, hw, checks, sim)
        else:
            per = _simulate_network(args, hw, checks, sim)
    tot = sim.totals
    if args.format == "json":
        print(json.dumps({"layers": [c.to_dict() for c in per], "total": tot.to_dict(),
                          "checks": dict(checks.results)}, indent=2))
    else:
        print(f"cycles={tot.cycles} dram_read={tot.dram_read_bytes} dram_write={tot.dram_write_bytes} "
              f"fsram_reads={int(tot.fsram_reads.sum())} reuse_hits={tot.reuse_reg_hits} "
              f"utilization={tot.utilization(hw.mac_budget):.4f} pooled={tot.pooled_pixels}")
    log = sys.stderr if args.format == "json" else sys.stdout
    if args.trace:
        sim.trace.write(args.trace)
        print(f"trace: {len(sim.trace)} events -> {args.trace}", file=log)
    print("PASS" if checks.ok else "FAIL", file=log)
    return 0 if checks.ok else 1


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cnnaccel", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def shared(p, network_required=True):
        p.add_argument("--network", default="ecnn" if not network_required else None,
                       required=network_required, help="built-in name or JSON network file")
        p.add_argument("--strategy", choices=sorted(STRATEGY), default="output")
        p.add_argument("--ofp", action="store_true", help="on-fly pooling")
        p.add_argument("--ppfs", action="store_true", help="ping-pong feature SRAM residency")
        p.add_argument("--decompose", action="store_true", help="input channel decomposition for N < 4 layers")
        p.add_argument("--tm", type=int)
        p.add_argument("--tn", type=int)
        p.add_argument("--clock-mhz", type=float, default=500.0)
        p.add_argument("--mac-budget", type=int)
        p.add_argument("--format", choices=("csv", "json", "table"), default="table")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trace", help="write an event trace to this path")

    a = sub.add_parser("analyze", help="cost-model report")
    shared(a)
    a.add_argument("--compare", action="store_true", help="also print the strategy comparison")
    a.set_defaults(fn=cmd_analyze)
    d = sub.add_parser("dse", help="tiling search report")
    shared(d)
    d.set_defaults(fn=cmd_dse)
    s = sub.add_parser("simulate", help="run the simulator and check it")
    shared(s, network_required=False)
    s.add_argument("--layer", help="single layer HxWxNxMkKsSpP[pool][dw] instead of a network")
    s.add_argument("--disable-reuse-regs", action="store_true")
    s.add_argument("--max-macs", type=float, default=2e9)
    s.add_argument("--backend", choices=("numba", "numpy"))
    s.set_defaults(fn=cmd_simulate)
    b = sub.add_parser("builtins", help="list built-in networks")
    b.set_defaults(fn=cmd_builtins)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, NetworkValidationError, cm.TilingError, NoFeasibleTiling, SimCapacityError,
            ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
