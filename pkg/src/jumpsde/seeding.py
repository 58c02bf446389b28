"""Per-path seed derivation.

Every path owns a 64-bit sub-seed mixed from the master seed and its index,
so a batch is the same no matter how paths are split across chunks or
threads. Streams inside a path (Wiener increments, jump train, ...) are
separated with a tag fed to :class:`numpy.random.SeedSequence`.
"""

import numpy as np

MASK64 = (1 << 64) - 1

WIENER = 0
JUMPS = 1
RESAMPLE = 2
MARKS_MC = 3
ATOMS = 4


def splitmix64(z):
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def path_seed(master, index):
    """64-bit sub-seed of path ``index`` under ``master``."""
    return splitmix64((splitmix64(int(master) & MASK64) + int(index)) & MASK64)


def path_seeds(master, n, offset=0):
    return np.array([path_seed(master, offset + i) for i in range(n)], dtype=np.uint64)


def stream(seed, tag):
    """Generator for one domain-separated stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & MASK64, int(tag)]))
