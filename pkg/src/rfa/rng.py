"""Seed plan: counter-based, splittable random streams.

Every random consumer in the package derives its stream from a
``(master_seed, purpose tag, index)`` triple.  Tags are hashed to a
stable 32-bit word, mixed with the master seed through
:class:`numpy.random.SeedSequence`, and expanded into 64-bit Philox keys.
A Philox generator keyed by one of these words is an independent,
counter-based stream, so results never depend on the order in which
streams are consumed or on how work is spread over threads.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = [
    "tag_word",
    "derive_seeds",
    "derive_seed",
    "bit_generator",
    "generator",
]

_MASK64 = (1 << 64) - 1


def tag_word(tag: str) -> int:
    """Stable 32-bit identifier of a purpose tag."""
    return zlib.crc32(tag.encode("utf-8"))


def _sequence(master_seed: int, tag: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed) & _MASK64, spawn_key=(tag_word(tag),))


def derive_seeds(master_seed: int, tag: str, count: int, start: int = 0) -> np.ndarray:
    """Return ``count`` 64-bit seeds for indices ``start .. start+count-1``.

    The sequence is prefix-stable: the seed of index ``i`` does not depend
    on how many seeds are requested.
    """
    if count < 0 or start < 0:
        raise ValueError("count and start must be non-negative")
    words = _sequence(master_seed, tag).generate_state(start + count, np.uint64)
    return words[start:]


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    return int(derive_seeds(master_seed, tag, 1, start=index)[0])


def bit_generator(seed: int) -> np.random.Philox:
    """Philox bit generator keyed by a 64-bit stream seed."""
    return np.random.Philox(key=int(seed) & _MASK64)


def generator(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Convenience: a :class:`numpy.random.Generator` for one sub-stream."""
    return np.random.Generator(bit_generator(derive_seed(master_seed, tag, index)))
