"""Reproducible random-stream derivation.

Every stochastic component draws from a stream derived from (seed, labels...)
via SHA-256, so results never depend on Python's per-process hash seed, on
scheduling, or on how many draws another component consumed.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(*parts) -> int:
    """Fold the parts into a stable 64-bit seed."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            h.update(b"b" + part)
        else:
            h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "big")


def derive_rng(*parts) -> random.Random:
    """A fresh random.Random seeded from the parts."""
    return random.Random(derive_seed(*parts))
