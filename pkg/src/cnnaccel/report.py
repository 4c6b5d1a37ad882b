"""Per-layer report rows, CSV/JSON/table emitters and published reference values."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, fields, asdict
from decimal import Decimal, ROUND_HALF_EVEN

from . import costmodel as cm
from .dse import DsePlan

NONE = "none"


def mb6(total_bytes: int) -> float:
    """Bytes -> MB (2**20), rounded half-even to 6 decimals."""
    q = (Decimal(total_bytes) / Decimal(cm.MB)).quantize(Decimal("0.000001"), rounding=ROUND_HALF_EVEN)
    return float(q)


@dataclass(frozen=True)
class ReportRow:
    layer: str
    tm: int
    tn: int
    strategy: str
    cycles: int
    utilization: float
    gops: float
    input_bytes: int
    weight_bytes: int
    output_bytes: int
    total_bytes: int
    mb: float

    def __post_init__(self):
        if self.total_bytes != self.input_bytes + self.weight_bytes + self.output_bytes:
            raise ValueError(f"{self.layer}: total_bytes is not the sum of the streams")
        if self.mb != mb6(self.total_bytes):
            raise ValueError(f"{self.layer}: mb {self.mb} != {mb6(self.total_bytes)}")


FIELDS = tuple(f.name for f in fields(ReportRow))
_TYPES = {f.name: f.type for f in fields(ReportRow)}


# published values: (network, strategy, ofp, ppfs) -> total MB
PUBLISHED_MB = {
    ("ecnn", NONE, False, False): 1261.41,
    ("ecnn", cm.INPUT_REUSE, False, False): 10.72,
    ("ecnn", cm.OUTPUT_REUSE, False, False): 5.003887,
    ("ecnn", cm.INPUT_REUSE, True, False): 6.43,
    ("ecnn", cm.OUTPUT_REUSE, True, False): 2.92,
    ("ecnn", cm.OUTPUT_REUSE, True, True): 2.28,
    ("vgg16", cm.OUTPUT_REUSE, False, False): 90.295860,
    ("vgg16", cm.OUTPUT_REUSE, True, False): 78.620079,
    ("vgg16", cm.OUTPUT_REUSE, True, True): 72.332971,
    ("mobilenet_v1", NONE, False, False): 2044.77,
    ("mobilenet_v1", cm.OUTPUT_REUSE, False, False): 58.3,
    ("mobilenet_v1", cm.OUTPUT_REUSE, False, True): 23.98,
}
PUBLISHED_RATIO = {"ecnn": 533.0}
# per-layer (tm, tn, cycles, gops, mb) for eCNN under output reuse
PUBLISHED_ECNN_LAYERS = (
    (32, 3, 65538, 863.97, 2.191265),
    (32, 4, 131088, 1152.0, 1.024536),
    (32, 4, 131088, 1152.0, 1.024536),
    (32, 4, 32784, 1152.0, 0.266724),
    (32, 4, 32784, 1152.0, 0.266724),
    (32, 4, 8208, 1152.0, 0.075317),
    (32, 4, 8208, 1152.0, 0.075317),
    (32, 4, 2064, 1152.0, 0.026489),
    (32, 4, 4128, 1152.0, 0.052979),
)
# published VGG-16 latency "13.35139", read as megacycles
PUBLISHED_VGG_CYCLES = 13_351_390
PUBLISHED_VGG_MS = 13.35139


def rel_dev(ours: float, published: float) -> float:
    return (ours - published) / published


def _note(what: str, ours, published) -> str:
    return f"{what}: ours {ours} vs published {published} ({rel_dev(float(ours), float(published)):+.2%})"


@dataclass
class Report:
    network: str
    strategy: str
    ofp: bool
    ppfs: bool
    clock_hz: float
    rows: list
    notes: list

    def total(self) -> ReportRow:
        return self.rows[-1]


def build_report(plan: DsePlan, strategy: str | None = None) -> Report:
    """Rows per layer plus a final 'total' row. strategy='none' reports the no-reuse baseline traffic."""
    hw = plan.hw
    strategy = strategy or plan.strategy
    rows = []
    for layer, t, perf, acc in zip(plan.network.layers, plan.choices, plan.perf, plan.access.layers):
        if strategy == NONE:
            acc = cm.AccessBreakdown(layer.macs, layer.macs, layer.out_h * layer.out_w * layer.out_ch)
        rows.append(ReportRow(
            layer.name, t.tm, t.tn, strategy, perf.cycles, perf.utilization, perf.gops,
            acc.input_bytes, acc.weight_bytes, acc.output_bytes, acc.total_bytes, mb6(acc.total_bytes),
        ))
    cyc = sum(r.cycles for r in rows)
    util = plan.network.macs / (hw.mac_budget * cyc)
    tin, tw, tout = (sum(getattr(r, f) for r in rows) for f in ("input_bytes", "weight_bytes", "output_bytes"))
    rows.append(ReportRow("total", 0, 0, strategy, cyc, util, cm.performance(util, hw),
                          tin, tw, tout, tin + tw + tout, mb6(tin + tw + tout)))
    rep = Report(plan.network.name, strategy, plan.ofp, plan.ppfs, hw.clock_hz, rows, [])
    rep.notes = reference_notes(rep, plan)
    return rep


def reference_notes(rep: Report, plan: DsePlan | None = None) -> list[str]:
    """Every number with a published counterpart is printed next to it with the relative deviation."""
    notes = []
    pub = PUBLISHED_MB.get((rep.network, rep.strategy, rep.ofp, rep.ppfs))
    if pub is not None:
        notes.append(_note("total MB", rep.total().mb, pub))
    if rep.network == "ecnn" and rep.strategy == cm.OUTPUT_REUSE and not rep.ofp and not rep.ppfs:
        for r, (tm, tn, cyc, gops, mb) in zip(rep.rows, PUBLISHED_ECNN_LAYERS):
            if (r.tm, r.tn) != (tm, tn):
                notes.append(f"{r.layer} tiling: ours ({r.tm},{r.tn}) vs published ({tm},{tn})")
            if r.cycles != cyc:
                notes.append(_note(f"{r.layer} cycles", r.cycles, cyc))
            if abs(r.gops - gops) > 0.005:
                notes.append(_note(f"{r.layer} GOPs", round(r.gops, 2), gops))
            if r.mb != mb:
                notes.append(_note(f"{r.layer} MB", r.mb, mb))
    if rep.network == "vgg16" and plan is not None and plan.decomposed:
        cyc = rep.total().cycles
        notes.append(_note("total cycles", cyc, PUBLISHED_VGG_CYCLES))
        ms = cyc / rep.clock_hz * 1e3
        notes.append(f"latency at {rep.clock_hz / 1e6:g} MHz: {ms:.5f} ms; the published {PUBLISHED_VGG_MS} ms "
                     f"matches the cycle count, not this clock")
    return notes


# ---------------------------------------------------------------- emitters

def to_csv(rep: Report) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(FIELDS)
    for r in rep.rows:
        wr.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, f) for f in FIELDS)])
    for n in rep.notes:
        buf.write(f"# {n}\n")
    return buf.getvalue()


def _coerce(name, raw):
    typ = _TYPES[name]
    if typ in (int, "int"):
        return int(raw)
    if typ in (float, "float"):
        return float(raw)
    return raw


def rows_from_csv(text: str) -> list[ReportRow]:
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    rd = csv.DictReader(lines)
    if tuple(rd.fieldnames or ()) != FIELDS:
        raise ValueError(f"unexpected CSV header {rd.fieldnames}")
    return [ReportRow(**{k: _coerce(k, v) for k, v in rec.items()}) for rec in rd]


def to_json(rep: Report) -> str:
    doc = {
        "network": rep.network, "strategy": rep.strategy, "ofp": rep.ofp, "ppfs": rep.ppfs,
        "clock_hz": rep.clock_hz, "rows": [asdict(r) for r in rep.rows], "notes": rep.notes,
    }
    return json.dumps(doc, indent=2)


def report_from_json(text: str) -> Report:
    doc = json.loads(text)
    rows = [ReportRow(**{k: _coerce(k, v) for k, v in r.items()}) for r in doc["rows"]]
    return Report(doc["network"], doc["strategy"], doc["ofp"], doc["ppfs"], doc["clock_hz"], rows, doc["notes"])


def to_table(rep: Report) -> str:
    head = ("layer", "tm", "tn", "cycles", "util", "GOPs", "in B", "w B", "out B", "total B", "MB")
    body = [
        (r.layer, str(r.tm or ""), str(r.tn or ""), str(r.cycles), f"{r.utilization:.4f}", f"{r.gops:.2f}",
         str(r.input_bytes), str(r.weight_bytes), str(r.output_bytes), str(r.total_bytes), f"{r.mb:.6f}")
        for r in rep.rows
    ]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    fmt = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    title = f"{rep.network}  strategy={rep.strategy}  ofp={rep.ofp}  ppfs={rep.ppfs}"
    out = [title, fmt(head), fmt(["-" * w for w in widths])] + [fmt(b) for b in body]
    out += [f"  * {n}" for n in rep.notes]
    return "\n".join(out)


def emit(rep: Report, fmt: str) -> str:
    if fmt == "csv":
        return to_csv(rep)
    if fmt == "json":
        return to_json(rep)
    if fmt == "table":
        return to_table(rep)
    raise ValueError(f"unknown format {fmt!r}")


def strategy_table(rows, network: str) -> str:
    """compare_strategies output with the published totals alongside."""
    key = {
        "no_reuse": (NONE, False, False), "input_reuse": (cm.INPUT_REUSE, False, False),
        "output_reuse": (cm.OUTPUT_REUSE, False, False), "input_reuse+ofp": (cm.INPUT_REUSE, True, False),
        "output_reuse+ofp": (cm.OUTPUT_REUSE, True, False), "output_reuse+ofp+ppfs": (cm.OUTPUT_REUSE, True, True),
    }
    lines = [f"{'strategy':<24}{'bytes':>12}{'MB':>14}{'ratio':>10}{'published MB':>14}{'dev':>9}"]
    for r in rows:
        pub = PUBLISHED_MB.get((network, *key[r.name]))
        dev = f"{rel_dev(r.mb, pub):+.1%}" if pub else ""
        lines.append(f"{r.name:<24}{r.total_bytes:>12}{mb6(r.total_bytes):>14.6f}{r.ratio:>9.1f}x"
                     f"{(pub if pub else ''):>14}{dev:>9}")
    return "\n".join(lines)
