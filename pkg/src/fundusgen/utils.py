"""Seeding, hashing and small shared helpers."""

from __future__ import annotations

import hashlib
import json
import random

import numpy as np
import torch

FNV1A64_OFFSET = 0xCBF29CE484222325
FNV1A64_PRIME = 0x100000001B3


def fnv1a64(data: str | bytes) -> int:
    """64-bit FNV-1a hash. Used for reproducible path-based dataset splits."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV1A64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV1A64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def canonical_json(obj) -> str:
    """Canonical JSON text: sorted keys, no whitespace, UTF-8 safe."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def digest_of(obj) -> str:
    """Stable hex digest of a JSON-serializable object (first 16 hex chars)."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def seed_everything(seed: int) -> None:
    """Seed torch, numpy and the stdlib RNG."""
    torch.manual_seed(seed)
    np.random.seed(seed % (2**32))
    random.seed(seed)


def set_deterministic(enabled: bool = True) -> None:
    """Force deterministic kernels (CPU builds already are; this pins it)."""
    torch.use_deterministic_algorithms(enabled)


def derive_seed(base: int, *salts) -> int:
    """Stable per-purpose seed derived from a base seed and salt values.

    Keeps independent consumers (batch order, sampling, subset draws) from
    sharing one RNG stream, so adding a consumer never shifts the others.
    """
    text = ":".join([str(base)] + [str(s) for s in salts])
    return fnv1a64(text) % (2**31)
