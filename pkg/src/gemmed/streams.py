"""Deterministic random-stream derivation.

Every random draw in the package comes from a ``numpy.random.Generator``
derived from one 64-bit master seed.  A stream is identified by a component
name plus optional coordinates (for example a benchmark cell), so the numbers
a component sees do not depend on execution order.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream_key", "make_rng", "derive_seed"]


def stream_key(name: str, *coords) -> tuple[int, ...]:
    """Stable integer key for a named stream.

    The key is the CRC-32 of the component name followed by the CRC-32 of the
    ``repr`` of each coordinate.  ``hash()`` is not used because it is salted
    per interpreter process.
    """
    parts = [name, *(repr(c) for c in coords)]
    return tuple(zlib.crc32(p.encode("utf-8")) for p in parts)


def make_rng(seed: int, name: str = "", *coords) -> np.random.Generator:
    """Generator for stream ``(name, *coords)`` under master ``seed``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=stream_key(name, *coords) if name else ())
    return np.random.default_rng(ss)


def derive_seed(seed: int, name: str, *coords) -> int:
    """64-bit integer seed for a sub-component of stream ``(name, *coords)``.

    Used where a component takes an integer seed rather than a Generator,
    e.g. the per-cell datasets of a benchmark sweep.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=stream_key(name, *coords))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
