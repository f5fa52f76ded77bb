"""Computation/memory energy estimates for one inference, and break-even analysis.

Three estimators are provided:

``m0``
    FLOPs divided by the processor's FLOPs-per-joule (peak throughput over power).
``m1``
    Dynamic CMOS power ``kappa * N * f**3`` times the run time ``W / (S * N * f)``.
``m2``
    Per-layer MAC energy: ``M_c * (a_c / d_0 + b_c)`` for convolutions and
    ``M_f * a_f`` for dense layers.

All energies are joules in double precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional

from .model_ir import ModelSpec, count_flops, count_macs

__all__ = [
    "IncompleteProfileError",
    "ProfileError",
    "HardwareProfile",
    "LayerEnergy",
    "EnergyEstimate",
    "BreakEvenReport",
    "METRICS",
    "metric0_energy",
    "metric1_energy",
    "metric2_energy",
    "model_energy",
    "total_energy",
    "layerwise_breakdown",
    "break_even",
    "load_profiles",
    "loads_profiles",
    "default_profiles",
]

METRICS = ("m0", "m1", "m2")


class ProfileError(ValueError):
    """Malformed hardware-profile file or record."""


class IncompleteProfileError(ProfileError):
    """A metric needs a profile field that is absent."""


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    peak_ops_per_sec: Optional[float] = None
    power_watts: Optional[float] = None
    cores: Optional[int] = None
    clock_hz: Optional[float] = None
    flops_per_clock: Optional[float] = None
    kappa: Optional[float] = None
    a_c: Optional[float] = None
    b_c: Optional[float] = None
    a_f: Optional[float] = None
    mem_energy_per_byte: float = 0.0
    notes: str = ""

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("name", "notes", "mem_energy_per_byte"):
                continue
            value = getattr(self, f.name)
            if value is not None and not value > 0:
                raise ProfileError(f"profile {self.name!r}: {f.name} must be > 0, got {value!r}")
        if not self.mem_energy_per_byte >= 0:
            raise ProfileError(f"profile {self.name!r}: mem_energy_per_byte must be >= 0")
        parts = (self.peak_ops_per_sec, self.cores, self.clock_hz, self.flops_per_clock)
        if all(p is not None for p in parts):
            ceiling = self.cores * self.clock_hz * self.flops_per_clock
            if self.peak_ops_per_sec > ceiling * (1 + 1e-9):
                raise ProfileError(
                    f"profile {self.name!r}: peak_ops_per_sec {self.peak_ops_per_sec:g} exceeds "
                    f"cores*clock_hz*flops_per_clock = {ceiling:g}"
                )

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise IncompleteProfileError(f"profile {self.name!r} lacks {', '.join(missing)}")

    @classmethod
    def from_dict(cls, data: dict) -> "HardwareProfile":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ProfileError(f"profile {data.get('name')!r}: unknown fields {unknown}")
        if "name" not in data:
            raise ProfileError("profile record without a name")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}


@dataclass(frozen=True)
class LayerEnergy:
    layer_id: str
    block_id: str
    energy_j: float


@dataclass(frozen=True)
class EnergyEstimate:
    computation_j: float
    memory_j: float
    total_j: float
    per_layer: tuple[LayerEnergy, ...] = ()
    metric_used: str = "m0"

    def block_totals(self) -> dict[str, float]:
        totals: dict[str, float] = {}
        for item in self.per_layer:
            totals[item.block_id] = totals.get(item.block_id, 0.0) + item.energy_j
        return totals

    def with_memory(self, memory_j: float) -> "EnergyEstimate":
        return EnergyEstimate(self.computation_j, memory_j, self.computation_j + memory_j,
                              self.per_layer, self.metric_used)


@dataclass(frozen=True)
class BreakEvenReport:
    training_energy_total_j: float
    single_inference_j: float
    n_star: int
    inference_rate_per_sec: float
    time_to_break_even_s: float
    amortized_at: tuple[tuple[int, float], ...] = field(default=())

    def rows(self):
        """``(n, amortized training J/inference, cumulative inference J)`` per decade."""
        return [(n, a, self.single_inference_j * n) for n, a in self.amortized_at]


def metric0_energy(flops, profile: HardwareProfile) -> float:
    profile.require("peak_ops_per_sec", "power_watts")
    flops_per_joule = profile.peak_ops_per_sec / profile.power_watts
    return flops / flops_per_joule


def metric1_energy(flops, profile: HardwareProfile) -> float:
    profile.require("kappa", "cores", "clock_hz", "flops_per_clock")
    n, f = profile.cores, profile.clock_hz
    duration = flops / (profile.flops_per_clock * n * f)
    return profile.kappa * n * f**3 * duration


def metric2_energy(spec: ModelSpec, profile: HardwareProfile) -> EnergyEstimate:
    profile.require("a_c", "b_c", "a_f")
    per_layer = []
    for block_id, layer in spec.iter_layers():
        if layer.kind == "conv2d":
            e = count_macs(layer) * (profile.a_c / layer.input_features + profile.b_c)
        elif layer.kind == "dense":
            e = count_macs(layer) * profile.a_f
        else:
            e = 0.0
        per_layer.append(LayerEnergy(layer.id, block_id, e))
    computation = math.fsum(item.energy_j for item in per_layer)
    return EnergyEstimate(computation, 0.0, computation, tuple(per_layer), "m2")


def model_energy(spec: ModelSpec, profile: HardwareProfile, metric: str = "m0") -> float:
    """Computation energy of one forward pass of ``spec``."""
    if metric == "m0":
        return metric0_energy(spec.total_flops, profile)
    if metric == "m1":
        return metric1_energy(spec.total_flops, profile)
    if metric == "m2":
        return metric2_energy(spec, profile).computation_j
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def total_energy(computation_j: float, bytes_accessed, profile: HardwareProfile,
                 estimate: Optional[EnergyEstimate] = None) -> EnergyEstimate:
    """Add the memory term: ``total = computation + bytes * J/byte``."""
    if bytes_accessed < 0:
        raise ValueError("bytes_accessed must be >= 0")
    memory_j = bytes_accessed * profile.mem_energy_per_byte
    if estimate is not None:
        return estimate.with_memory(memory_j)
    return EnergyEstimate(computation_j, memory_j, computation_j + memory_j)


def layerwise_breakdown(spec: ModelSpec, profile: HardwareProfile,
                        metric: str = "m0") -> EnergyEstimate:
    """Per-layer computation energy.

    m0 and m1 are whole-model estimates, so their energy is attributed to
    layers in proportion to FLOPs; m2 is per-layer already.
    """
    if metric == "m2":
        return metric2_energy(spec, profile)
    computation = model_energy(spec, profile, metric)
    total_flops = spec.total_flops
    per_layer = tuple(
        LayerEnergy(layer.id, block_id,
                    computation * count_flops(layer) / total_flops if total_flops else 0.0)
        for block_id, layer in spec.iter_layers()
    )
    return EnergyEstimate(computation, 0.0, computation, per_layer, metric)


def _ceil_ratio(num: float, den: float) -> int:
    q = num / den
    nearest = round(q)
    # the quotient of two decimal inputs can land one ulp above an exact integer
    if nearest > 0 and abs(q - nearest) <= 4 * math.ulp(q):
        return int(nearest)
    return int(math.ceil(q))


def break_even(training_step_j: float, n_training_steps: int, single_inference_j: float,
               inference_rate_per_sec: float) -> BreakEvenReport:
    for label, value in (("training_step_j", training_step_j),
                         ("n_training_steps", n_training_steps),
                         ("single_inference_j", single_inference_j),
                         ("inference_rate_per_sec", inference_rate_per_sec)):
        if not value > 0:
            raise ValueError(f"{label} must be > 0, got {value!r}")
    total = training_step_j * n_training_steps
    n_star = _ceil_ratio(total, single_inference_j)
    amortized = tuple((10**k, total / 10**k) for k in range(2, 11))
    return BreakEvenReport(
        training_energy_total_j=total,
        single_inference_j=single_inference_j,
        n_star=n_star,
        inference_rate_per_sec=inference_rate_per_sec,
        time_to_break_even_s=n_star / inference_rate_per_sec,
        amortized_at=amortized,
    )


def loads_profiles(text: str) -> list[HardwareProfile]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, list):
        raise ProfileError("profile file must hold a JSON array")
    profiles = [HardwareProfile.from_dict(item) for item in data]
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise ProfileError("duplicate profile names")
    return profiles


def load_profiles(path) -> list[HardwareProfile]:
    return loads_profiles(Path(path).read_text(encoding="utf-8"))


def default_profiles() -> list[HardwareProfile]:
    text = resources.files("wattlab").joinpath("data/profiles.json").read_text("utf-8")
    return loads_profiles(text)
