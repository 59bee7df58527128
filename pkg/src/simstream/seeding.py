"""Deterministic derivation of per-purpose random generators from one master seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, label: str) -> int:
    """Map (master seed, purpose label) to a stable 63-bit child seed."""
    digest = hashlib.sha256(f"{master_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def derive_rng(master_seed: int, label: str) -> np.random.Generator:
    """Independent generator for one named purpose (dataset, model init, ...)."""
    return np.random.default_rng(derive_seed(master_seed, label))
