"""Counter-based random streams.

Every random draw in the package comes from a Philox stream whose key and
starting counter are a pure function of ``(seed, realization, layer, index,
purpose)``. Streams never share counter ranges, so results do not depend on
evaluation order or on how work is split across workers.
"""
from __future__ import annotations

import enum

import numpy as np

_MASK64 = (1 << 64) - 1


class Purpose(enum.IntEnum):
    GATE = 1
    HERALD = 2
    MC = 3
    SAMPLE = 4
    TRIPARTITION = 5
    INSTANCE = 6


def stream(seed: int, realization: int = 0, layer: int = 0, index: int = 0,
           purpose: int = 0) -> np.random.Generator:
    """Return an independent generator for the given stream key.

    The key words hold ``(seed, realization)``; the high counter words hold
    ``(index, layer, purpose)`` and the low word starts at zero, so a stream
    has 2**64 draws before it could run into a neighbour.
    """
    for name, value in (("seed", seed), ("realization", realization),
                        ("layer", layer), ("index", index), ("purpose", purpose)):
        if value < 0:
            raise ValueError(f"{name} must be nonnegative, got {value}")
    key = [int(seed) & _MASK64, int(realization) & _MASK64]
    counter = [0, int(index) & _MASK64, int(layer) & _MASK64, int(purpose) & _MASK64]
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
