"""Named, step-indexed random streams.

Every consumer asks for the generator of a ``(name, step)`` pair. The generator
depends only on the run seed, the name and the step, so two code paths that do
the same work at step k draw the same numbers no matter how much extra work
either did elsewhere.
"""

from __future__ import annotations

import zlib

import numpy as np


def _stream_id(name: str) -> int:
    return zlib.crc32(name.encode())


class Streams:
    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, name: str, step: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, _stream_id(name), int(step)])

    def __repr__(self):
        return f"Streams(seed={self.seed})"
