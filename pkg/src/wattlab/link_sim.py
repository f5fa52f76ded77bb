"""Synthetic SIMO link, BER-vs-SINR evaluation and the log-mean BER score.

Each sample is one transmitted symbol seen through ``n_rx`` receive
branches with independent complex gains, plus ``n_pilots`` known pilot
symbols (value 1) seen through the same gains.  Features are the real and
imaginary parts of all observations; labels are the transmitted bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .rng import make_rng

__all__ = [
    "MODULATIONS",
    "ChannelConfig",
    "Dataset",
    "BerPoint",
    "BerCurve",
    "bits_per_symbol",
    "modulate",
    "generate_dataset",
    "training_set",
    "optimal_detector_ber",
    "q_function",
    "evaluate_ber",
    "eval_rng",
    "geometric_mean_ber",
    "write_ber_csv",
    "read_ber_csv",
]

MODULATIONS = {"bpsk": 1, "qpsk": 2, "qam16": 4}
FADING = ("rayleigh", "awgn")

_QAM16_LEVELS = {(0, 0): -3.0, (0, 1): -1.0, (1, 1): 1.0, (1, 0): 3.0}


@dataclass(frozen=True)
class ChannelConfig:
    modulation: str = "qpsk"
    n_rx: int = 2
    n_pilots: int = 2
    sinr_grid_db: tuple[float, ...] = tuple(float(v) for v in range(-4, 15, 2))
    samples_per_point: int = 20_000
    seed: int = 0
    fading: str = "rayleigh"

    def __post_init__(self):
        object.__setattr__(self, "sinr_grid_db", tuple(float(v) for v in self.sinr_grid_db))
        if self.modulation not in MODULATIONS:
            raise ValueError(f"unknown modulation {self.modulation!r}")
        if self.fading not in FADING:
            raise ValueError(f"unknown fading {self.fading!r}")
        if self.n_rx < 1 or self.n_pilots < 0:
            raise ValueError("n_rx must be >= 1 and n_pilots >= 0")
        grid = self.sinr_grid_db
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("sinr_grid_db must be non-empty and strictly increasing")
        if self.samples_per_point < 1000:
            raise ValueError("samples_per_point must be >= 1000")

    @property
    def bits_per_symbol(self) -> int:
        return MODULATIONS[self.modulation]

    @property
    def feature_dim(self) -> int:
        return 2 * self.n_rx * (1 + self.n_pilots)


@dataclass
class Dataset:
    features: np.ndarray
    bits: np.ndarray
    gains: np.ndarray = field(repr=False)
    received: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    symbols: np.ndarray = field(repr=False)

    def __iter__(self):
        # unpacks as (features, bits)
        return iter((self.features, self.bits))

    def __len__(self):
        return self.features.shape[0]


def bits_per_symbol(modulation: str) -> int:
    return MODULATIONS[modulation]


def modulate(bits: np.ndarray, modulation: str) -> np.ndarray:
    """Unit-average-energy Gray mapping of ``bits`` (n, k) to n complex symbols."""
    b = np.asarray(bits, dtype=int)
    if modulation == "bpsk":
        return (1.0 - 2.0 * b[:, 0]).astype(complex)
    if modulation == "qpsk":
        return ((1.0 - 2.0 * b[:, 0]) + 1j * (1.0 - 2.0 * b[:, 1])) / math.sqrt(2.0)
    if modulation == "qam16":
        lut = np.zeros((2, 2))
        for (x, y), level in _QAM16_LEVELS.items():
            lut[x, y] = level
        return (lut[b[:, 0], b[:, 1]] + 1j * lut[b[:, 2], b[:, 3]]) / math.sqrt(10.0)
    raise ValueError(f"unknown modulation {modulation!r}")


def _noise_power(sinr_db: float) -> float:
    return 0.0 if math.isinf(sinr_db) and sinr_db > 0 else 10.0 ** (-sinr_db / 10.0)


def _cn(rng, shape, power: float) -> np.ndarray:
    """Circular complex Gaussian with E|x|^2 = power."""
    std = math.sqrt(power / 2.0)
    return std * rng.standard_normal(shape) + 1j * std * rng.standard_normal(shape)


def generate_dataset(cfg: ChannelConfig, sinr_db: float, n: int,
                     rng: Optional[np.random.Generator] = None) -> Dataset:
    """``n`` received symbols at ``sinr_db``.

    Symbols have unit average energy, so the per-branch noise power is
    ``10**(-sinr_db/10)``.  Without ``rng`` the stream is derived from
    ``(cfg.seed, "data", sinr_db)``.
    """
    if math.isnan(sinr_db):
        raise ValueError("sinr_db must not be NaN")
    if rng is None:
        rng = make_rng(cfg.seed, "data", float(sinr_db))
    k, r, p = cfg.bits_per_symbol, cfg.n_rx, cfg.n_pilots
    bits = rng.integers(0, 2, size=(n, k))
    symbols = modulate(bits, cfg.modulation)
    if cfg.fading == "rayleigh":
        gains = _cn(rng, (n, r), 1.0)
    else:
        gains = np.ones((n, r), dtype=complex)
    n0 = _noise_power(sinr_db)
    noise = _cn(rng, (n, r, 1 + p), n0)
    tx = np.concatenate([symbols[:, None], np.ones((n, p), dtype=complex)], axis=1)
    received = gains[:, :, None] * tx[:, None, :] + noise
    flat = received.reshape(n, -1)
    features = np.empty((n, 2 * flat.shape[1]))
    features[:, 0::2] = flat.real
    features[:, 1::2] = flat.imag
    return Dataset(features, bits.astype(float), gains, received, noise, symbols)


def training_set(cfg: ChannelConfig, n: int, master_seed: int) -> Dataset:
    """``n`` samples spread evenly (round-robin) across the SINR grid."""
    grid = cfg.sinr_grid_db
    counts = [n // len(grid) + (1 if i < n % len(grid) else 0) for i in range(len(grid))]
    parts = [generate_dataset(cfg, s, c, make_rng(master_seed, "train", i))
             for i, (s, c) in enumerate(zip(grid, counts)) if c]
    return Dataset(*(np.concatenate([getattr(d, f) for d in parts])
                     for f in ("features", "bits", "gains", "received", "noise", "symbols")))


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def optimal_detector_ber(cfg: ChannelConfig, sinr_db: float, n: Optional[int] = None,
                         rng: Optional[np.random.Generator] = None) -> float:
    """Monte-Carlo BER of the known-channel maximum-ratio detector (BPSK/QPSK)."""
    if cfg.modulation not in ("bpsk", "qpsk"):
        raise NotImplementedError(f"optimal detector not implemented for {cfg.modulation}")
    n = cfg.samples_per_point if n is None else n
    ds = generate_dataset(cfg, sinr_db, n, rng)
    combined = np.sum(np.conj(ds.gains) * ds.received[:, :, 0], axis=1)
    decided = [(combined.real < 0)]
    if cfg.modulation == "qpsk":
        decided.append(combined.imag < 0)
    decided = np.stack(decided, axis=1).astype(float)
    return float(np.mean(decided != ds.bits))


@dataclass(frozen=True)
class BerPoint:
    sinr_db: float
    n_errors: int
    n_bits_tested: int

    @property
    def raw_ber(self) -> float:
        return self.n_errors / self.n_bits_tested

    @property
    def ber(self) -> float:
        """Error rate floored at ``1/(2 n_bits)`` so it is never zero."""
        return max(self.raw_ber, 1.0 / (2 * self.n_bits_tested))


@dataclass
class BerCurve:
    points: list[BerPoint]
    model_label: str = ""

    @property
    def gm_ber(self) -> float:
        return geometric_mean_ber(self.points)

    @property
    def gm_ber_linear(self) -> float:
        return 10.0 ** self.gm_ber

    def ber_at(self, sinr_db: float) -> float:
        for p in self.points:
            if p.sinr_db == sinr_db:
                return p.ber
        raise KeyError(sinr_db)


def geometric_mean_ber(points: Sequence) -> float:
    """Mean of ``log10(ber)`` over the points (BerPoint or plain rates)."""
    if len(points) == 0:
        raise ValueError("no BER points")
    bers = np.array([p.ber if isinstance(p, BerPoint) else float(p) for p in points])
    if np.any(bers <= 0) or np.any(~np.isfinite(bers)):
        raise ValueError("BER values must be positive; floor zero counts first")
    return float(np.mean(np.log10(bers)))


def eval_rng(master_seed: int, sinr_index: int) -> np.random.Generator:
    return make_rng(master_seed, "eval", sinr_index)


def evaluate_ber(predict: Callable[[np.ndarray], np.ndarray], cfg: ChannelConfig,
                 label: str = "", master_seed: Optional[int] = None) -> BerCurve:
    """Hard-decide ``predict``'s bit logits on held-out data at each grid point."""
    master = cfg.seed if master_seed is None else master_seed
    points = []
    for i, sinr in enumerate(cfg.sinr_grid_db):
        ds = generate_dataset(cfg, sinr, cfg.samples_per_point, eval_rng(master, i))
        logits = np.asarray(predict(ds.features), dtype=float).reshape(ds.bits.shape)
        decided = (logits > 0).astype(float)
        points.append(BerPoint(sinr, int(np.count_nonzero(decided != ds.bits)), ds.bits.size))
    return BerCurve(points, label)


def write_ber_csv(curve: BerCurve, path=None, header: str = "") -> str:
    lines = [f"# {line}" for line in header.splitlines() if line]
    lines.append("sinr_db,ber,n_bits")
    lines += [f"{p.sinr_db!r},{p.ber!r},{p.n_bits_tested}" for p in curve.points]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_ber_csv(path_or_text, label: str = "") -> BerCurve:
    text = path_or_text if "\n" in str(path_or_text) else Path(path_or_text).read_text("utf-8")
    rows = [l for l in text.splitlines() if l and not l.startswith("#")]
    if rows[0] != "sinr_db,ber,n_bits":
        raise ValueError("unexpected BER CSV header")
    points = []
    for row in rows[1:]:
        s, b, n = row.split(",")
        n_bits, ber = int(n), float(b)
        errors = int(round(ber * n_bits)) if ber * n_bits >= 0.75 else 0
        points.append(BerPoint(float(s), errors, n_bits))
    return BerCurve(points, label)
