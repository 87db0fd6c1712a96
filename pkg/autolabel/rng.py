"""
Seeded random streams.

Every random draw in the pipeline comes from a Philox generator keyed by an
integer tuple ``(seed, stream, *ids)``. Philox is counter-based and numpy
guarantees its bit stream across platforms, so frames regenerate bit-for-bit.
"""
import numpy as np

PLACEMENT = 1
CLOUD = 2
GROUND = 3
NOISE = 4
SURROGATE = 5
CORPUS = 6
LICL_CHECK = 7

_MASK64 = (1 << 64) - 1


def stream(seed, tag, *ids):
    entropy = [int(seed) & _MASK64, int(tag)] + [int(i) & _MASK64 for i in ids]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
