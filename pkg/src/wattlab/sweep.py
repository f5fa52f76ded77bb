"""Train-and-evaluate experiment cells and the four hyperparameter sweeps.

A *cell* trains one student (from scratch or by distillation) and scores it
on the held-out BER grid.  All cells of an experiment share the training
set and the evaluation data, and cells with the same seed index share the
student's initial parameters, so grid values are compared pairwise.
"""

from __future__ import annotations

import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .link_sim import BerCurve, ChannelConfig, evaluate_ber, training_set
from .net import DivergenceError, Distill, DistillConfig, Net, NetSpec, TrainConfig, TrainRun, train
from .rng import derive_seed

log = logging.getLogger(__name__)

__all__ = [
    "SWEEP_KINDS",
    "ExperimentSettings",
    "CellResult",
    "SweepResult",
    "cell_seed",
    "student_spec",
    "teacher_spec",
    "train_teacher",
    "run_cell",
    "sweep",
]

SWEEP_KINDS = ("student_size", "teacher_size", "alpha", "temperature")


@dataclass(frozen=True)
class ExperimentSettings:
    """Everything a cell needs besides the swept value and the seed index."""

    channel: ChannelConfig = field(default_factory=ChannelConfig)
    master_seed: int = 0
    n_train: int = 20_000
    student_width: int = 8
    student_blocks: int = 2
    teacher_width: int = 16
    teacher_blocks: int = 2
    learning_rate: float = 0.5
    n_steps: int = 4000
    batch_size: int = 64
    teacher_learning_rate: float = 0.2
    teacher_steps: int = 20_000
    teacher_batch_size: int = 256
    alpha: float = 0.1
    temperature: float = 2.0
    mode: str = "distill"
    n_seeds: int = 5

    def __post_init__(self):
        if self.mode not in ("scratch", "distill"):
            raise ValueError(f"mode must be scratch or distill, got {self.mode!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel"]["sinr_grid_db"] = list(self.channel.sinr_grid_db)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSettings":
        data = dict(data)
        if "channel" in data and isinstance(data["channel"], dict):
            data["channel"] = ChannelConfig(**data["channel"])
        return cls(**data)


@dataclass
class CellResult:
    grid_value: float
    seed: int
    status: str
    gm_ber: float = float("nan")
    curve: Optional[BerCurve] = None
    run: Optional[TrainRun] = field(default=None, repr=False)
    flops: int = 0
    error: str = ""


@dataclass
class SweepResult:
    kind: str
    grid: list
    cells: list[CellResult]

    def summary(self) -> list[dict]:
        rows = []
        for value in self.grid:
            ok = [c.gm_ber for c in self.cells if c.grid_value == value and c.status == "ok"]
            flops = next((c.flops for c in self.cells if c.grid_value == value), 0)
            rows.append({
                "grid_value": value,
                "flops": flops,
                "n_ok": len(ok),
                "median_gm_ber": statistics.median(ok) if ok else None,
                "min_gm_ber": min(ok) if ok else None,
                "max_gm_ber": max(ok) if ok else None,
            })
        return rows

    @property
    def all_failed(self) -> bool:
        return all(c.status != "ok" for c in self.cells)


def cell_seed(master_seed: int, seed_index: int) -> int:
    return int(derive_seed(master_seed, "cell", seed_index).generate_state(1)[0])


def student_spec(s: ExperimentSettings, width: Optional[int] = None) -> NetSpec:
    ch = s.channel
    return NetSpec(ch.feature_dim, width or s.student_width, s.student_blocks, ch.bits_per_symbol)


def teacher_spec(s: ExperimentSettings, width: Optional[int] = None) -> NetSpec:
    ch = s.channel
    return NetSpec(ch.feature_dim, width or s.teacher_width, s.teacher_blocks, ch.bits_per_symbol)


def _train_data(s: ExperimentSettings):
    ds = training_set(s.channel, s.n_train, s.master_seed)
    return ds.features, ds.bits


def train_teacher(s: ExperimentSettings, seed_index: int = 0, width: Optional[int] = None,
                  data=None) -> TrainRun:
    data = _train_data(s) if data is None else data
    cfg = TrainConfig(int(derive_seed(s.master_seed, "teacher", seed_index).generate_state(1)[0]),
                      s.teacher_learning_rate, s.teacher_steps, s.teacher_batch_size)
    return train(teacher_spec(s, width), cfg, data)


def run_cell(s: ExperimentSettings, kind: Optional[str] = None, value=None, seed_index: int = 0,
             teacher: Optional[Net] = None, data=None, keep_run: bool = False) -> CellResult:
    """Train one student and evaluate it; ``kind``/``value`` override one setting."""
    settings, width, t_width = s, None, None
    if kind == "student_size":
        width = int(value)
    elif kind == "teacher_size":
        t_width = int(value)
        settings = replace(s, mode="distill")
    elif kind == "alpha":
        settings = replace(s, alpha=float(value), mode="distill")
    elif kind == "temperature":
        settings = replace(s, temperature=float(value), mode="distill")
    elif kind is not None:
        raise ValueError(f"unknown sweep kind {kind!r}")

    spec = student_spec(settings, width)
    label_value = value if value is not None else 0
    result = CellResult(label_value, seed_index, "ok", flops=spec.flops_per_inference)
    data = _train_data(settings) if data is None else data
    cfg = TrainConfig(cell_seed(settings.master_seed, seed_index), settings.learning_rate,
                      settings.n_steps, settings.batch_size)
    try:
        objective = None
        if settings.mode == "distill":
            if teacher is None:
                teacher = train_teacher(settings, 0, t_width, data).net
            objective = Distill(DistillConfig(settings.alpha, settings.temperature), teacher)
        run = train(spec, cfg, data, objective)
    except DivergenceError as exc:
        log.warning("cell %s=%s seed %d diverged: %s", kind, value, seed_index, exc)
        result.status, result.error = "failed", str(exc)
        return result
    result.curve = evaluate_ber(run.net, settings.channel,
                                label=f"{settings.mode} {kind}={value} seed={seed_index}",
                                master_seed=settings.master_seed)
    result.gm_ber = result.curve.gm_ber
    if keep_run:
        result.run = run
    return result


def _cell_job(args):
    s, kind, value, seed_index = args
    return run_cell(s, kind, value, seed_index)


def sweep(kind: str, grid: Sequence, s: ExperimentSettings, workers: int = 1) -> SweepResult:
    """One cell per ``(grid value, seed index)``; failed cells are kept, not raised."""
    if kind not in SWEEP_KINDS:
        raise ValueError(f"kind must be one of {SWEEP_KINDS}")
    if not grid:
        raise ValueError("empty grid")
    grid = list(grid)
    jobs = [(v, i) for v in grid for i in range(s.n_seeds)]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell_job, [(s, kind, v, i) for v, i in jobs]))
    else:
        data = _train_data(s)
        teachers: dict[int, Net] = {}
        cells = []
        for value, i in jobs:
            teacher = None
            needs_teacher = kind != "student_size" or s.mode == "distill"
            if needs_teacher:
                t_width = int(value) if kind == "teacher_size" else s.teacher_width
                if t_width not in teachers:
                    teachers[t_width] = train_teacher(s, 0, t_width, data).net
                teacher = teachers[t_width]
            cells.append(run_cell(s, kind, value, i, teacher=teacher, data=data))
    # order-independent assembly
    cells.sort(key=lambda c: (grid.index(c.grid_value), c.seed))
    return SweepResult(kind, grid, cells)
