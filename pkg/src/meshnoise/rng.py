"""Reproducible random streams.

Every stream is addressed by ``(seed, stream, substream)`` and backed by its
own PCG64 generator seeded through :class:`numpy.random.SeedSequence`, so
sample ``i`` of a run depends only on the seed and ``i`` and never on how the
work was scheduled. Standard normals are produced from uniform draws with the
Box-Muller transform::

    u1 in (0, 1], u2 in [0, 1)
    r = sqrt(-2 log u1)
    z_even = r cos(2 pi u2),  z_odd = r sin(2 pi u2)
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class RngStream:
    """Stateful normal-variate stream; repeated draws continue the sequence."""

    def __init__(self, seed: int = 0, stream: int = 0, substream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.substream = int(substream)
        ss = np.random.SeedSequence(
            self.seed & _MASK64, spawn_key=(self.stream & _MASK64, self.substream & _MASK64)
        )
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, size: int) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size: int) -> np.ndarray:
        m = (size + 1) // 2
        u1 = 1.0 - self._gen.random(m)
        u2 = self._gen.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:size]

    def channel(self, c: int) -> "RngStream":
        """Independent stream for channel ``c`` of a vector-valued sample."""
        return RngStream(self.seed, self.stream, self.substream + 1 + c)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream}, substream={self.substream})"


def normal_block(seed: int, streams, size: int, substream: int = 0) -> np.ndarray:
    """Stack one ``size``-long normal draw per stream index into an array."""
    streams = list(streams)
    out = np.empty((len(streams), size))
    for row, s in enumerate(streams):
        out[row] = RngStream(seed, s, substream).normal(size)
    return out
