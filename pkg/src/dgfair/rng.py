"""Seed derivation.

Every random stream is a numpy ``Generator`` on the counter-based Philox
bit generator.  A stream is identified by ``(root_seed, purpose)``; its key is

    root_seed XOR int.from_bytes(blake2b(purpose, digest_size=8), "little")

so different purposes never share state and no stream reads system entropy.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def purpose_hash(purpose: str) -> int:
    digest = hashlib.blake2b(purpose.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, purpose: str) -> int:
    """64-bit seed for the stream ``purpose`` under ``seed``."""
    return (int(seed) & MASK64) ^ purpose_hash(purpose)


def make_rng(seed: int, purpose: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(seed, purpose)))


def child_seed(seed: int, *path: object) -> int:
    """Deterministic sub-seed, e.g. ``child_seed(root, "sweep", omega, gamma, k)``."""
    return derive_seed(seed, "/".join(str(p) for p in path))
