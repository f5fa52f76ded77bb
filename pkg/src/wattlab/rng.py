"""Seed derivation.

Every random stream in wattlab is a numpy ``Generator`` over ``PCG64``
seeded from a ``SeedSequence``.  Child streams are derived from a master
seed plus a tuple of tags; string tags are hashed with SHA-256 so the
derivation does not depend on ``PYTHONHASHSEED`` or the platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "make_rng", "stable_hash"]


def _tag_to_int(tag) -> int:
    if isinstance(tag, (bool, np.bool_)):
        tag = int(tag)
    if isinstance(tag, (int, np.integer)) and tag >= 0:
        return int(tag)
    digest = hashlib.sha256(repr(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(master_seed: int, *tags) -> np.random.SeedSequence:
    """Child ``SeedSequence`` for ``(master_seed, *tags)``."""
    return np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=tuple(_tag_to_int(t) for t in tags)
    )


def make_rng(master_seed: int, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, *tags)))


def stable_hash(payload: str, length: int = 12) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:length]
