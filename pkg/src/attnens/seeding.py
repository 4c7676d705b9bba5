"""Deterministic derivation of RNG seeds from structured keys.

Every stochastic step (weight init, shuffling, dropout masks, augmentation
draws) is seeded through here so that a run is a pure function of its config.
String components are folded in via CRC32, so sample ids participate in the
key without any dependence on Python's salted hash().
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(*components: int | str) -> int:
    """Mix integers and strings into a single 64-bit seed."""
    # Leading length word: SeedSequence zero-pads its entropy, so without it
    # (a, b) and (a, b, 0) would alias.
    entropy = [len(components)]
    for c in components:
        if isinstance(c, str):
            entropy.append(zlib.crc32(c.encode("utf-8")))
        else:
            v = int(c)
            if v < 0:
                raise ValueError(f"seed components must be non-negative, got {v}")
            entropy.append(v)
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1, np.uint64)[0])


def rng_for(*components: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*components))
