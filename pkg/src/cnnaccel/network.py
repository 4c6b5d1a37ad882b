"""Network descriptions: layer shapes, validation, JSON loading and built-ins."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

KINDS = ("standard_conv", "depthwise_conv", "pointwise_conv")


class NetworkValidationError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    in_h: int
    in_w: int
    in_ch: int
    out_ch: int
    kernel: int = 3
    stride: int = 1
    pad: int = 1
    followed_by_pool: bool = False
    relu: bool = True

    def __post_init__(self):
        validate_layer(self)

    @property
    def out_h(self) -> int:
        return output_dims(self)[0]

    @property
    def out_w(self) -> int:
        return output_dims(self)[1]

    @property
    def next_dims(self) -> tuple[int, int]:
        """Spatial dims handed to the next layer (after the optional 2x2 pool)."""
        oh, ow = output_dims(self)
        if self.followed_by_pool:
            return oh // 2, ow // 2
        return oh, ow

    @property
    def macs(self) -> int:
        oh, ow = output_dims(self)
        k2 = self.kernel * self.kernel
        if self.kind == "depthwise_conv":
            return oh * ow * self.out_ch * k2
        return oh * ow * self.out_ch * self.in_ch * k2

    @property
    def params(self) -> int:
        k2 = self.kernel * self.kernel
        if self.kind == "depthwise_conv":
            return self.out_ch * k2
        return self.out_ch * self.in_ch * k2


def output_dims(layer: LayerSpec) -> tuple[int, int]:
    k, s, p = layer.kernel, layer.stride, layer.pad
    return (layer.in_h + 2 * p - k) // s + 1, (layer.in_w + 2 * p - k) // s + 1


def validate_layer(layer: LayerSpec) -> None:
    def fail(msg):
        raise NetworkValidationError(f"layer {layer.name!r}: {msg}")

    if layer.kind not in KINDS:
        fail(f"unknown kind {layer.kind!r}")
    if layer.in_ch < 1 or layer.out_ch < 1:
        fail("N >= 1 and M >= 1 required")
    if layer.kernel not in (1, 3):
        fail("K must be 1 or 3")
    if layer.stride not in (1, 2):
        fail("S must be 1 or 2")
    if layer.pad < 0:
        fail("P must be >= 0")
    for dim, label in ((layer.in_h, "in_h"), (layer.in_w, "in_w")):
        span = dim + 2 * layer.pad - layer.kernel
        if span < 0:
            fail(f"({label}+2P-K) is negative")
        # a remainder up to P only drops padding; anything more skips real pixels
        if span % layer.stride > layer.pad:
            fail(f"({label}+2P-K) not divisible by S")
    if layer.kind == "depthwise_conv" and layer.out_ch != layer.in_ch:
        fail("depthwise_conv requires M = N")
    if layer.kind == "pointwise_conv" and (layer.kernel != 1 or layer.pad != 0):
        fail("pointwise_conv requires K = 1 and P = 0")
    if layer.kind != "pointwise_conv" and layer.kernel != 3:
        fail(f"{layer.kind} requires K = 3")
    if layer.followed_by_pool:
        oh, ow = output_dims(layer)
        if oh % 2 or ow % 2:
            fail("pooled layer needs even output dims")


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)
    precision_bits: int = 8

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise NetworkValidationError(f"network {self.name!r} has no layers")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.next_dims != (nxt.in_h, nxt.in_w) or prev.out_ch != nxt.in_ch:
                raise NetworkValidationError(
                    f"layer {nxt.name!r}: input {nxt.in_h}x{nxt.in_w}x{nxt.in_ch} does not match "
                    f"output of {prev.name!r} ({prev.next_dims[0]}x{prev.next_dims[1]}x{prev.out_ch})"
                )

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    @property
    def macs(self) -> int:
        return sum(l.macs for l in self.layers)


_JSON_KEYS = {
    "name", "kind", "in_h", "in_w", "in_ch", "out_ch", "kernel", "stride", "pad", "pool_after", "relu",
}
_OPTIONAL = {"pool_after": False, "relu": True}


def layer_from_dict(d: dict) -> LayerSpec:
    if not isinstance(d, dict):
        raise NetworkValidationError(f"layer entry must be an object, got {type(d).__name__}")
    unknown = set(d) - _JSON_KEYS
    if unknown:
        raise NetworkValidationError(f"layer {d.get('name')!r}: unknown keys {sorted(unknown)}")
    missing = _JSON_KEYS - set(d) - set(_OPTIONAL)
    if missing:
        raise NetworkValidationError(f"layer {d.get('name')!r}: missing keys {sorted(missing)}")
    vals = {**_OPTIONAL, **d}
    for k in ("in_h", "in_w", "in_ch", "out_ch", "kernel", "stride", "pad"):
        if not isinstance(vals[k], int) or isinstance(vals[k], bool):
            raise NetworkValidationError(f"layer {d.get('name')!r}: {k} must be an integer")
    for k in ("pool_after", "relu"):
        if not isinstance(vals[k], bool):
            raise NetworkValidationError(f"layer {d.get('name')!r}: {k} must be a boolean")
    return LayerSpec(
        name=str(vals["name"]),
        kind=vals["kind"],
        in_h=vals["in_h"],
        in_w=vals["in_w"],
        in_ch=vals["in_ch"],
        out_ch=vals["out_ch"],
        kernel=vals["kernel"],
        stride=vals["stride"],
        pad=vals["pad"],
        followed_by_pool=vals["pool_after"],
        relu=vals["relu"],
    )


def layer_to_dict(layer: LayerSpec) -> dict:
    d = asdict(layer)
    d["pool_after"] = d.pop("followed_by_pool")
    return d


def network_from_dict(doc: dict) -> NetworkSpec:
    if not isinstance(doc, dict):
        raise NetworkValidationError("top level must be an object")
    unknown = set(doc) - {"name", "layers"}
    if unknown:
        raise NetworkValidationError(f"unknown top-level keys {sorted(unknown)}")
    if "name" not in doc or "layers" not in doc or not isinstance(doc["layers"], list):
        raise NetworkValidationError("expected {'name': str, 'layers': [...]}")
    return NetworkSpec(name=str(doc["name"]), layers=tuple(layer_from_dict(l) for l in doc["layers"]))


def network_to_dict(net: NetworkSpec) -> dict:
    return {"name": net.name, "layers": [layer_to_dict(l) for l in net.layers]}


def load_network(path) -> NetworkSpec:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetworkValidationError(f"{path}: malformed JSON ({e})") from e
    return network_from_dict(doc)


def save_network(net: NetworkSpec, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=2) + "\n")


def _ecnn(scale: int = 1, name: str = "ecnn") -> NetworkSpec:
    # (spatial, N, M, pool)
    rows = [
        (256, 3, 32, True),
        (128, 32, 32, False),
        (128, 32, 32, True),
        (64, 32, 32, False),
        (64, 32, 32, True),
        (32, 32, 32, False),
        (32, 32, 32, True),
        (16, 32, 32, False),
        (16, 32, 64, False),
    ]
    layers = [
        LayerSpec(f"conv{i + 1}", "standard_conv", hw // scale, hw // scale, n, m, 3, 1, 1, pool)
        for i, (hw, n, m, pool) in enumerate(rows)
    ]
    return NetworkSpec(name, tuple(layers))


def _vgg16() -> NetworkSpec:
    cfg = [64, 64, "P", 128, 128, "P", 256, 256, 256, "P", 512, 512, 512, "P", 512, 512, 512, "P"]
    layers, hw, n = [], 224, 3
    for i, c in enumerate(cfg):
        if c == "P":
            continue
        pool = i + 1 < len(cfg) and cfg[i + 1] == "P"
        layers.append(LayerSpec(f"conv{len(layers) + 1}", "standard_conv", hw, hw, n, c, 3, 1, 1, pool))
        n = c
        if pool:
            hw //= 2
    return NetworkSpec("vgg16", tuple(layers))


def _mobilenet_v1() -> NetworkSpec:
    blocks = [(64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2)] + [(512, 1)] * 5 + [(1024, 2), (1024, 1)]
    layers = [LayerSpec("conv1", "standard_conv", 224, 224, 3, 32, 3, 2, 1)]
    hw, n = 112, 32
    for i, (m, s) in enumerate(blocks):
        dw = LayerSpec(f"dw{i + 1}", "depthwise_conv", hw, hw, n, n, 3, s, 1)
        hw = dw.out_h
        layers.append(dw)
        layers.append(LayerSpec(f"pw{i + 1}", "pointwise_conv", hw, hw, n, m, 1, 1, 0))
        n = m
    return NetworkSpec("mobilenet_v1", tuple(layers))


BUILTINS = {
    "ecnn": _ecnn,
    "vgg16": _vgg16,
    "mobilenet_v1": _mobilenet_v1,
    "ecnn-mini": lambda: _ecnn(8, "ecnn-mini"),
}


def builtin_network(name: str) -> NetworkSpec:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown built-in network {name!r}; choose from {sorted(BUILTINS)}") from None


def resolve_network(source: str) -> NetworkSpec:
    """Built-in name or path to a JSON network file."""
    if source in BUILTINS:
        return builtin_network(source)
    return load_network(source)
