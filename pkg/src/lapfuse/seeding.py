"""Deterministic random number generation and seed derivation.

Every randomized operation in this package takes an explicit integer seed
and builds its generator through :func:`make_rng`, which always constructs
a PCG64 generator. PCG64 is platform independent, so seeded integer draws
and f64 variates are bit-reproducible across machines.

Pipeline stages derive their seeds from a single master seed with
:func:`derive_seed`. The mix is documented here so other implementations
can reproduce it:

    stage_hash = fnv1a64(utf8(label))
    seed       = splitmix64(splitmix64(master XOR stage_hash) + index)

All arithmetic is modulo 2**64.
"""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 scrambling step (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Derive an independent stream seed for a named stage and member index."""
    mixed = splitmix64((master & _MASK) ^ fnv1a64(label.encode("utf-8")))
    return splitmix64((mixed + index) & _MASK)


def make_rng(seed: int) -> np.random.Generator:
    """Construct the package-wide generator (PCG64) for a seed."""
    return np.random.Generator(np.random.PCG64(seed))
