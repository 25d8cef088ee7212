"""Named random streams derived from a master seed.

Every randomized step in a run draws from its own stream, keyed by a tag and
integer indices (cohort, round, client, ...). Streams never depend on the
order in which other streams were consumed, so cohorts can run on any worker
in any order and still reproduce bit for bit.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def rng(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Generator for stream ``name`` under ``seed``, further keyed by ``keys``."""
    entropy = [int(seed) & 0xFFFFFFFF, _tag(name), *(int(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(seed: int, name: str, *keys: int) -> int:
    """A plain 32-bit integer seed for APIs that take one."""
    return int(rng(seed, name, *keys).integers(0, 2**31 - 1))
