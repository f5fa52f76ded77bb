"""Layer-level model descriptions and exact FLOP/MAC accounting.

A :class:`ModelSpec` is an ordered list of residual blocks, each an ordered
list of :class:`LayerSpec`.  Nothing here holds weights; the point is to
count work.  One multiply-accumulate is two FLOPs everywhere, and bias adds
are folded into the MAC count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterator

__all__ = [
    "InvalidSpecError",
    "NotAMacLayerError",
    "ScalingError",
    "LayerSpec",
    "Block",
    "ModelSpec",
    "count_flops",
    "count_macs",
    "scale_model",
    "load_model",
    "loads_model",
    "dump_model",
    "example_model",
    "MAC_KINDS",
]

MAC_KINDS = ("conv2d", "dense")

_DIMS = {
    "conv2d": ("kernel_h", "kernel_w", "channels_in", "channels_out", "out_h", "out_w"),
    "dense": ("features_in", "features_out"),
    "elementwise": ("element_count",),
    "normalization": ("element_count",),
}

# dimensions that track the layer's channel/feature width; scaled by scale_model
_WIDTH_DIMS = {
    "conv2d": ("channels_in", "channels_out"),
    "dense": ("features_in", "features_out"),
    "elementwise": ("element_count",),
    "normalization": ("element_count",),
}


class InvalidSpecError(ValueError):
    """Malformed layer or model description."""


class NotAMacLayerError(ValueError):
    """MAC count requested for a layer without multiply-accumulates."""


class ScalingError(ValueError):
    """Requested FLOP target cannot be reached by width scaling."""


@dataclass(frozen=True)
class LayerSpec:
    id: str
    kind: str
    dims: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _DIMS:
            raise InvalidSpecError(f"layer {self.id!r}: unknown kind {self.kind!r}")
        expected = set(_DIMS[self.kind])
        got = set(self.dims)
        if got != expected:
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            raise InvalidSpecError(
                f"layer {self.id!r} ({self.kind}): missing {missing}, unexpected {extra}"
            )
        for name, value in self.dims.items():
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise InvalidSpecError(
                    f"layer {self.id!r}: {name} must be a positive integer, got {value!r}"
                )

    def __getattr__(self, name):
        # dims are exposed as attributes (layer.channels_in, ...)
        dims = self.__dict__.get("dims")
        if dims is not None and name in dims:
            return dims[name]
        raise AttributeError(name)

    def __hash__(self):
        return hash((self.id, self.kind, tuple(sorted(self.dims.items()))))

    @property
    def input_features(self) -> int:
        """Inputs feeding one output value (``d_0`` of the MAC energy model)."""
        if self.kind == "conv2d":
            return self.kernel_h * self.kernel_w * self.channels_in
        if self.kind == "dense":
            return self.features_in
        raise NotAMacLayerError(f"layer {self.id!r} is {self.kind}")

    @classmethod
    def conv2d(cls, id, kernel_h, kernel_w, channels_in, channels_out, out_h, out_w):
        return cls(id, "conv2d", dict(kernel_h=kernel_h, kernel_w=kernel_w,
                                      channels_in=channels_in, channels_out=channels_out,
                                      out_h=out_h, out_w=out_w))

    @classmethod
    def dense(cls, id, features_in, features_out):
        return cls(id, "dense", dict(features_in=features_in, features_out=features_out))

    @classmethod
    def elementwise(cls, id, element_count):
        return cls(id, "elementwise", dict(element_count=element_count))

    @classmethod
    def normalization(cls, id, element_count):
        return cls(id, "normalization", dict(element_count=element_count))


@dataclass(frozen=True)
class Block:
    block_id: str
    layers: tuple[LayerSpec, ...]

    @property
    def flops(self) -> int:
        return sum(count_flops(layer) for layer in self.layers)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    blocks: tuple[Block, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(
            b if isinstance(b, Block) else Block(b[0], tuple(b[1])) for b in self.blocks
        ))
        block_ids = [b.block_id for b in self.blocks]
        if len(set(block_ids)) != len(block_ids):
            raise InvalidSpecError(f"model {self.name!r}: duplicate block ids")
        layer_ids = [layer.id for _, layer in self.iter_layers()]
        if len(set(layer_ids)) != len(layer_ids):
            dup = sorted({i for i in layer_ids if layer_ids.count(i) > 1})
            raise InvalidSpecError(f"model {self.name!r}: duplicate layer ids {dup}")

    def iter_layers(self) -> Iterator[tuple[str, LayerSpec]]:
        for block in self.blocks:
            for layer in block.layers:
                yield block.block_id, layer

    @cached_property
    def total_flops(self) -> int:
        return sum(count_flops(layer) for _, layer in self.iter_layers())

    def block_flops(self) -> dict[str, int]:
        return {b.block_id: b.flops for b in self.blocks}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "blocks": [
                {"block_id": b.block_id,
                 "layers": [{"id": l.id, "kind": l.kind, **l.dims} for l in b.layers]}
                for b in self.blocks
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        _check_keys(data, {"name", "blocks"}, "model")
        blocks = []
        for i, raw_block in enumerate(data["blocks"]):
            _check_keys(raw_block, {"block_id", "layers"}, f"blocks[{i}]")
            layers = []
            for j, raw in enumerate(raw_block["layers"]):
                where = f"blocks[{i}].layers[{j}]"
                if "id" not in raw or "kind" not in raw:
                    raise InvalidSpecError(f"{where}: 'id' and 'kind' are required")
                kind = raw["kind"]
                if kind not in _DIMS:
                    raise InvalidSpecError(f"{where}: unknown kind {kind!r}")
                _check_keys(raw, {"id", "kind", *_DIMS[kind]}, where)
                dims = {k: v for k, v in raw.items() if k not in ("id", "kind")}
                layers.append(LayerSpec(str(raw["id"]), kind, dims))
            blocks.append(Block(str(raw_block["block_id"]), tuple(layers)))
        return cls(str(data["name"]), tuple(blocks))


def _check_keys(obj, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise InvalidSpecError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise InvalidSpecError(f"{where}: unknown fields {unknown}")
    missing = sorted(allowed - set(obj))
    if missing:
        raise InvalidSpecError(f"{where}: missing fields {missing}")


def count_flops(layer: LayerSpec) -> int:
    d = layer.dims
    if layer.kind == "conv2d":
        return 2 * d["kernel_h"] * d["kernel_w"] * d["channels_in"] * d["channels_out"] * d["out_h"] * d["out_w"]
    if layer.kind == "dense":
        return 2 * d["features_in"] * d["features_out"]
    if layer.kind == "elementwise":
        return d["element_count"]
    if layer.kind == "normalization":
        return 2 * d["element_count"]
    raise InvalidSpecError(f"unknown kind {layer.kind!r}")


def count_macs(layer: LayerSpec) -> int:
    if layer.kind not in MAC_KINDS:
        raise NotAMacLayerError(f"layer {layer.id!r} ({layer.kind}) has no MACs")
    return count_flops(layer) // 2


def _scaled_block(block: Block, factor: float) -> Block:
    layers = []
    for layer in block.layers:
        dims = dict(layer.dims)
        for name in _WIDTH_DIMS[layer.kind]:
            dims[name] = max(1, int(math.floor(dims[name] * factor + 0.5)))
        layers.append(replace(layer, dims=dims))
    return Block(block.block_id, tuple(layers))


def _centrality_order(n_blocks: int) -> list[int]:
    """Indices of the inner blocks, most central first."""
    center = (n_blocks - 1) / 2
    inner = range(1, n_blocks - 1)
    return sorted(inner, key=lambda i: (abs(i - center), i))


def scale_model(spec: ModelSpec, target_flops: int, tolerance: float = 0.05) -> ModelSpec:
    """Shrink the inner blocks' widths until ``total_flops`` is near ``target_flops``.

    The first and last blocks are left as they are.  All inner blocks share
    one width factor, found by bisection; if rounding keeps the result
    outside ``tolerance``, blocks are then adjusted one at a time from the
    centre outward.
    """
    total = spec.total_flops
    if target_flops == total:
        return spec
    if target_flops > total:
        raise ScalingError(f"target {target_flops} exceeds current total {total}")
    if target_flops <= 0:
        raise ScalingError("target must be positive")
    if len(spec.blocks) < 3:
        raise ScalingError("scaling needs at least 3 blocks (outer blocks are fixed)")

    order = _centrality_order(len(spec.blocks))

    def build(factors: dict[int, float]) -> ModelSpec:
        blocks = tuple(
            _scaled_block(b, factors[i]) if i in factors else b
            for i, b in enumerate(spec.blocks)
        )
        return ModelSpec(spec.name, blocks)

    def within(s: ModelSpec) -> bool:
        return abs(s.total_flops - target_flops) <= tolerance * target_flops

    floor_spec = build({i: 0.0 for i in order})
    if floor_spec.total_flops > target_flops * (1 + tolerance):
        raise ScalingError(
            f"target {target_flops} unreachable: minimum-width model has "
            f"{floor_spec.total_flops} FLOPs"
        )

    # total_flops is non-decreasing in the factor, so bisect on it
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if build({i: mid for i in order}).total_flops < target_flops:
            lo = mid
        else:
            hi = mid
    candidates = [build({i: lo for i in order}), build({i: hi for i in order})]
    best = min(candidates, key=lambda s: abs(s.total_flops - target_flops))
    if within(best):
        return best

    factors = {i: lo for i in order}
    for idx in order:
        a, b = lo, hi
        for _ in range(60):
            mid = 0.5 * (a + b)
            trial = dict(factors, **{idx: mid})
            if build(trial).total_flops < target_flops:
                a = mid
            else:
                b = mid
        options = [dict(factors, **{idx: a}), dict(factors, **{idx: b})]
        factors = min(options, key=lambda f: abs(build(f).total_flops - target_flops))
        candidate = build(factors)
        if within(candidate):
            return candidate
    raise ScalingError(f"could not bring total within {tolerance:.0%} of {target_flops}")


def loads_model(text: str) -> ModelSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return ModelSpec.from_dict(data)


def load_model(path) -> ModelSpec:
    return loads_model(Path(path).read_text(encoding="utf-8"))


def dump_model(spec: ModelSpec, path=None) -> str:
    text = json.dumps(spec.to_dict(), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def example_model() -> ModelSpec:
    """The bundled 11-block ``deeprx-like`` convolutional receiver."""
    text = resources.files("wattlab").joinpath("data/deeprx_like.json").read_text("utf-8")
    return loads_model(text)
