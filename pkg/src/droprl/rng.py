"""Seed derivation and random generators.

Every random draw in the package comes from numpy's Philox-4x64 counter-based
bit generator, which produces the same stream on every platform.  Sub-streams
are keyed by mixing a master seed with a cell index and a purpose tag through
SplitMix64::

    key = splitmix64(splitmix64(splitmix64(master) ^ cell) ^ fnv1a64(tag))

so that, e.g., data generation and subsampling of the same experiment cell
never share a stream.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


def derive_seed(master: int, cell: int = 0, tag: str = "") -> int:
    """64-bit sub-seed for ``(master, cell, tag)``."""
    z = splitmix64(int(master) & MASK64)
    z = splitmix64(z ^ (int(cell) & MASK64))
    return splitmix64(z ^ fnv1a64(tag))


def make_rng(seed: int, tag: str = "", cell: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, cell, tag)))
