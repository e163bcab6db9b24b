"""Deterministic seed derivation.

Every stochastic component (weight init, pair sampling, dropout noise)
draws from its own stream derived here, so runs are reproducible
regardless of global RNG state and of the order components start in.
"""

from __future__ import annotations

import hashlib


def derive_seed(*parts: int | str) -> int:
    """Hash a tuple of ints/strings into a stable 63-bit seed."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "big") & 0x7FFF_FFFF_FFFF_FFFF
