"""Deterministic substream derivation for reproducible (optionally parallel) runs.

All randomness in this package flows through counter-based Philox generators.
A substream is addressed by a root seed plus a tuple of structured integer
offsets (e.g. experiment index, snapshot index).  Because the key derivation
is a pure function of (root_seed, offsets), any worker can reconstruct its
stream independently, and results do not depend on scheduling order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Fixed offset domains so independent consumers of the same root seed never
# collide.  Values are arbitrary but frozen: changing them changes all outputs.
DOMAIN_SNAPSHOT = 0x5348_4F54  # shadow snapshot collection
DOMAIN_PREPARE = 0x5052_4550  # pseudo-Choi preparation attempts
DOMAIN_MODEL = 0x4D4F_4445  # model generation
DOMAIN_NOISE = 0x4E4F_4953  # noise mixing
DOMAIN_SWEEP = 0x5357_5045  # sweep grid points


def _mix(h: int, value: int) -> int:
    """One splitmix64-style round folding ``value`` into state ``h``.

    The state is multiplied before the value is added, so the fold is
    order-sensitive: _mix(_mix(0, a), b) != _mix(_mix(0, b), a) generically.
    """
    h = (h * 0x100000001B3 + (value & _MASK64) + 0x9E3779B97F4A7C15) & _MASK64
    z = h
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def substream(root_seed: int, *offsets: int) -> np.random.Generator:
    """Return the Philox generator keyed by ``root_seed`` and ``offsets``.

    The Philox key is (root_seed, mix(offsets)); distinct offset tuples give
    independent streams of the counter-based generator.
    """
    h = 0
    for off in offsets:
        h = _mix(h, off)
    key = np.array([root_seed & _MASK64, h], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def as_generator(seed) -> np.random.Generator:
    """Coerce an int seed or existing Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(int(seed))
