"""Small residual networks with hand-written gradients, and an SGD trainer.

Architecture: a linear stem to ``hidden_width``, ``n_residual_blocks``
blocks of ``h + tanh(W h + b)``, and a linear head to one logit per bit.
Parameters live in one flat float64 vector.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .kd import bce_loss, bitwise_kd_loss, total_loss
from .model_ir import Block, LayerSpec, ModelSpec
from .rng import make_rng

__all__ = [
    "NetSpec",
    "Net",
    "DistillConfig",
    "Distill",
    "TrainConfig",
    "TrainRun",
    "DivergenceError",
    "init_params",
    "forward",
    "backward",
    "loss_and_grad",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "write_loss_csv",
    "read_loss_csv",
]

CHECKPOINT_FORMAT = "wattlab-checkpoint"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at step {step}")
        self.step = step


@dataclass(frozen=True)
class NetSpec:
    input_dim: int
    hidden_width: int
    n_residual_blocks: int
    output_bits: int

    def __post_init__(self):
        for name in ("input_dim", "hidden_width", "output_bits"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_residual_blocks < 0:
            raise ValueError("n_residual_blocks must be >= 0")

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        d, w, o = self.input_dim, self.hidden_width, self.output_bits
        out = [("stem.W", (w, d)), ("stem.b", (w,))]
        for k in range(self.n_residual_blocks):
            out += [(f"block{k}.W", (w, w)), (f"block{k}.b", (w,))]
        out += [("head.W", (o, w)), ("head.b", (o,))]
        return out

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.shapes())

    def to_model_spec(self, name: str = "net") -> ModelSpec:
        w = self.hidden_width
        blocks = [Block("stem", (LayerSpec.dense("stem.affine", self.input_dim, w),))]
        for k in range(self.n_residual_blocks):
            blocks.append(Block(f"block{k}", (
                LayerSpec.dense(f"block{k}.affine", w, w),
                LayerSpec.elementwise(f"block{k}.tanh", w),
                LayerSpec.elementwise(f"block{k}.residual_add", w),
            )))
        blocks.append(Block("head", (LayerSpec.dense("head.affine", w, self.output_bits),)))
        return ModelSpec(name, tuple(blocks))

    @property
    def flops_per_inference(self) -> int:
        return self.to_model_spec().total_flops


def unpack(spec: NetSpec, params: np.ndarray) -> dict[str, np.ndarray]:
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got {params.shape}")
    views, offset = {}, 0
    for name, shape in spec.shapes():
        size = int(np.prod(shape))
        views[name] = params[offset:offset + size].reshape(shape)
        offset += size
    return views


def init_params(spec: NetSpec, rng: np.random.Generator) -> np.ndarray:
    parts = []
    for name, shape in spec.shapes():
        if name.endswith(".b"):
            parts.append(np.zeros(shape))
        else:
            fan_in = shape[1]
            scale = 1.0 / np.sqrt(fan_in)
            if name.startswith("block"):
                scale *= 0.5
            parts.append(rng.normal(0.0, scale, size=shape))
    return np.concatenate([p.ravel() for p in parts])


def _as_batch(spec: NetSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"input has shape {x.shape}; expected (..., {spec.input_dim})")
    return x, single


def forward(spec: NetSpec, params, x, return_cache: bool = False):
    p = unpack(spec, params)
    xb, single = _as_batch(spec, x)
    h = xb @ p["stem.W"].T + p["stem.b"]
    hidden, acts = [h], []
    for k in range(spec.n_residual_blocks):
        a = np.tanh(h @ p[f"block{k}.W"].T + p[f"block{k}.b"])
        h = h + a
        acts.append(a)
        hidden.append(h)
    logits = h @ p["head.W"].T + p["head.b"]
    out = logits[0] if single else logits
    if return_cache:
        return out, (xb, hidden, acts)
    return out


def backward(spec: NetSpec, params, cache, grad_logits) -> np.ndarray:
    """Gradient of the loss w.r.t. the flat parameters, given dloss/dlogits."""
    p = unpack(spec, params)
    xb, hidden, acts = cache
    g = np.asarray(grad_logits, dtype=float).reshape(xb.shape[0], spec.output_bits)
    grads = {
        "head.W": g.T @ hidden[-1],
        "head.b": g.sum(axis=0),
    }
    dh = g @ p["head.W"]
    for k in reversed(range(spec.n_residual_blocks)):
        dz = dh * (1.0 - acts[k] ** 2)
        grads[f"block{k}.W"] = dz.T @ hidden[k]
        grads[f"block{k}.b"] = dz.sum(axis=0)
        dh = dh + dz @ p[f"block{k}.W"]
    grads["stem.W"] = dh.T @ xb
    grads["stem.b"] = dh.sum(axis=0)
    return np.concatenate([grads[name].ravel() for name, _ in spec.shapes()])


def loss_and_grad(spec: NetSpec, params, x, loss_fn: Callable):
    """``loss_fn(logits) -> (loss, dloss/dlogits)``; returns ``(loss, grad)``."""
    logits, cache = forward(spec, params, x, return_cache=True)
    loss, dlogits = loss_fn(np.atleast_2d(logits))
    return loss, backward(spec, params, cache, dlogits)


class Net:
    """A spec bound to parameters; calling it maps features to bit logits."""

    def __init__(self, spec: NetSpec, params):
        self.spec = spec
        self.params = np.asarray(params, dtype=float)

    def __call__(self, features) -> np.ndarray:
        return forward(self.spec, self.params, features)


@dataclass(frozen=True)
class DistillConfig:
    alpha: float = 1.0
    temperature: float = 1.0
    # divide the SGD step by (1 + alpha); keeps large alpha stable without
    # changing the objective's minimisers
    normalize_step: bool = True

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass(frozen=True)
class Distill:
    config: DistillConfig
    teacher: Net


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    learning_rate: float = 0.1
    n_steps: int = 2000
    batch_size: int = 64


@dataclass
class TrainRun:
    spec: NetSpec
    config: TrainConfig
    objective: str
    loss_history: list[tuple[int, float, float, float]] = field(default_factory=list)
    final_params: Optional[np.ndarray] = None

    @property
    def net(self) -> Net:
        return Net(self.spec, self.final_params)


def train(spec: NetSpec, config: TrainConfig, data, objective: Union[None, str, Distill] = None,
          init: Optional[np.ndarray] = None) -> TrainRun:
    """Plain fixed-step SGD on minibatches drawn from ``data = (features, bits)``.

    ``objective`` is ``None``/``"scratch"`` for the task loss alone or a
    :class:`Distill` for the combined objective with a frozen teacher.
    """
    features, bits = (np.asarray(a, dtype=float) for a in data)
    if features.shape[0] != bits.shape[0]:
        raise ValueError("features and bits disagree on sample count")
    if bits.shape[1] != spec.output_bits:
        raise ValueError(f"labels have {bits.shape[1]} bits, net emits {spec.output_bits}")
    params = (init_params(spec, make_rng(config.seed, "init")) if init is None
              else np.array(init, dtype=float))
    batch_rng = make_rng(config.seed, "batches")
    distill = objective if isinstance(objective, Distill) else None
    run = TrainRun(spec, config, "distill" if distill else "scratch")

    # overflow on the way to a non-finite loss is reported as DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(config.n_steps):
            idx = batch_rng.integers(0, features.shape[0], size=config.batch_size)
            xb, yb = features[idx], bits[idx]
            logits, cache = forward(spec, params, xb, return_cache=True)
            l_student, g_student = bce_loss(logits, yb)
            if distill is None:
                l_kd, loss, g = 0.0, l_student, g_student
            else:
                cfg = distill.config
                teacher_logits = distill.teacher(xb)
                l_kd, g_kd = bitwise_kd_loss(teacher_logits, logits, cfg.temperature)
                loss = total_loss(l_student, l_kd, cfg.alpha)
                g = cfg.alpha * g_student + g_kd
                if cfg.normalize_step:
                    g = g / (1.0 + cfg.alpha)
            if not np.isfinite(loss):
                raise DivergenceError(step, loss)
            run.loss_history.append((step, float(loss), float(l_student), float(l_kd)))
            params -= config.learning_rate * backward(spec, params, cache, g)
    run.final_params = params
    return run


def save_checkpoint(path, spec: NetSpec, params, seed: int, extra: Optional[dict] = None) -> None:
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "net": asdict(spec),
        "seed": int(seed),
        "params": [float(v) for v in np.asarray(params)],
    }
    if extra:
        record["extra"] = extra
    Path(path).write_text(json.dumps(record) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[NetSpec, np.ndarray, int]:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format") != CHECKPOINT_FORMAT or record.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} wattlab checkpoint")
    spec = NetSpec(**record["net"])
    params = np.array(record["params"], dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError(f"{path}: parameter count does not match net")
    return spec, params, int(record["seed"])


def write_loss_csv(history, path=None, header: str = "") -> str:
    lines = [f"# {line}" for line in header.splitlines() if line]
    lines.append("step,L,L_student,L_KD")
    lines += [f"{s},{l!r},{ls!r},{lk!r}" for s, l, ls, lk in history]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_loss_csv(path_or_text) -> list[tuple[int, float, float, float]]:
    text = path_or_text if "\n" in str(path_or_text) else Path(path_or_text).read_text("utf-8")
    rows = [l for l in text.splitlines() if l and not l.startswith("#")]
    if rows[0] != "step,L,L_student,L_KD":
        raise ValueError("unexpected loss CSV header")
    out = []
    for row in rows[1:]:
        s, l, ls, lk = row.split(",")
        out.append((int(s), float(l), float(ls), float(lk)))
    return out
