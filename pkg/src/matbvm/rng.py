"""Seeded random streams.

Every draw in the library comes from a :class:`RngStream`, a ``(seed,
stream_id)`` pair that maps to numpy's counter-based Philox4x64 generator
keyed through a ``SeedSequence`` with ``spawn_key=(stream_id,)``.  The
mapping involves only integer arithmetic, so equal streams reproduce equal
draws on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = 2**64


@dataclass(frozen=True)
class RngStream:
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= value < _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RngStream":
        """Stream for replication ``index``: ``stream_id + index``."""
        return RngStream(self.seed, (self.stream_id + index) % _U64)


def as_generator(rng) -> np.random.Generator:
    """Accept a :class:`RngStream`, a ``Generator`` or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")
