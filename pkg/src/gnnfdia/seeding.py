"""Seed derivation: every random stream is a pure function of
``(root seed, purpose, index)``."""
from __future__ import annotations

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def derive_rng(root: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one ``(purpose, index)`` slot under ``root``."""
    ss = np.random.SeedSequence(int(root), spawn_key=(purpose_key(purpose), int(index)))
    return np.random.default_rng(ss)


def derive_seed(root: int, purpose: str, index: int = 0) -> int:
    ss = np.random.SeedSequence(int(root), spawn_key=(purpose_key(purpose), int(index)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
