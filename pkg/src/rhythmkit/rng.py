"""Deterministic seed derivation for simulations and sweeps.

Every random draw in this package flows through a ``numpy.random.Generator``
obtained from :func:`generator`. Stream separation is done by mixing a master
seed with integer or string tags through splitmix64.

The mixing rule is part of the package's external reproducibility contract
(sweep child runs use ``derive_seed(master_seed, run_index)``):

    state = splitmix64(master)
    for each tag: state = splitmix64(state XOR encode(tag))

where ``encode`` is the identity for integers (reduced mod 2**64) and FNV-1a
for strings.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer; maps any int to a 64-bit value."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def derive_seed(master: int, *tags: int | str) -> int:
    """Mix a master seed with stream tags into a fresh 64-bit seed."""
    state = splitmix64(int(master) & _MASK64)
    for tag in tags:
        enc = fnv1a64(tag) if isinstance(tag, str) else int(tag) & _MASK64
        state = splitmix64(state ^ enc)
    return state


def generator(master: int, *tags: int | str) -> np.random.Generator:
    """PCG64 generator on the stream identified by (master, *tags)."""
    return np.random.default_rng(derive_seed(master, *tags))
