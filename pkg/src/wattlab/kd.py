"""Temperature softmax, KL divergence and the distillation objective.

The combined objective is ``L = alpha * L_student + L_KD`` with
``L_KD = KL(p(z_teacher, T) || p(z_student, T))``.  No ``T**2`` factor is
applied to the KD term.

Receivers emit one logit per bit, so the ``bitwise_*`` helpers treat each
bit as a two-class distribution over the logit pair ``(z, 0)`` and average
over bits and samples.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "softened_probs",
    "kl_divergence",
    "kd_loss",
    "total_loss",
    "bitwise_kd_loss",
    "bce_loss",
    "sigmoid",
    "softplus",
]

KL_FLOOR = 1e-12


def softened_probs(logits, temperature: float) -> np.ndarray:
    """``exp(z_i / T) / sum_j exp(z_j / T)`` along the last axis."""
    z = np.asarray(logits, dtype=float)
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature!r}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    scaled = z / temperature
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    e = np.exp(scaled)
    return e / e.sum(axis=-1, keepdims=True)


def kl_divergence(p, q) -> float:
    """``sum p_i log(p_i / q_i)``, with ``0 log 0 = 0`` and ``q`` floored at 1e-12."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9 or np.any(v < 0):
            raise ValueError(f"{name} is not a probability vector")
    q = np.maximum(q, KL_FLOOR)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def kd_loss(teacher_logits, student_logits, temperature: float) -> float:
    return kl_divergence(softened_probs(teacher_logits, temperature),
                         softened_probs(student_logits, temperature))


def total_loss(student_task_loss: float, kd: float, alpha: float) -> float:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return alpha * student_task_loss + kd


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def bce_loss(logits, bits):
    """Mean binary cross-entropy of per-bit logits against hard bits.

    Returns ``(loss, dloss/dlogits)``.
    """
    z = np.asarray(logits, dtype=float)
    b = np.asarray(bits, dtype=float)
    loss = float(np.mean(softplus(z) - b * z))
    return loss, (sigmoid(z) - b) / z.size


def bitwise_kd_loss(teacher_logits, student_logits, temperature: float):
    """Mean per-bit ``KL(sigma(z_t/T) || sigma(z_s/T))`` and its gradient in ``z_s``."""
    a = np.asarray(teacher_logits, dtype=float) / temperature
    b = np.asarray(student_logits, dtype=float) / temperature
    p = sigmoid(a)
    # log sigma(x) = -softplus(-x), log(1 - sigma(x)) = -softplus(x)
    kl = p * (softplus(-b) - softplus(-a)) + (1 - p) * (softplus(b) - softplus(a))
    grad = (sigmoid(b) - p) / (temperature * b.size)
    return float(np.mean(kl)), grad
