"""Arithmetic over GF(2^m) and matrix rank over that field.

Elements are plain ints in [0, 2^m); addition is XOR, multiplication uses
exp/log tables built from a fixed primitive reduction polynomial per m
(the classic published table, x is a generator for every entry), so results
are reproducible across implementations.
"""

from __future__ import annotations

import random
from typing import Sequence

# Primitive polynomials over GF(2), bit i = coefficient of x^i.
REDUCTION_POLY = {
    1: 0x3,        # x + 1
    2: 0x7,        # x^2 + x + 1
    3: 0xB,        # x^3 + x + 1
    4: 0x13,       # x^4 + x + 1
    5: 0x25,       # x^5 + x^2 + 1
    6: 0x43,       # x^6 + x + 1
    7: 0x89,       # x^7 + x^3 + 1
    8: 0x11D,      # x^8 + x^4 + x^3 + x^2 + 1
    9: 0x211,      # x^9 + x^4 + 1
    10: 0x409,     # x^10 + x^3 + 1
    11: 0x805,     # x^11 + x^2 + 1
    12: 0x1053,    # x^12 + x^6 + x^4 + x + 1
    13: 0x201B,    # x^13 + x^4 + x^3 + x + 1
    14: 0x4443,    # x^14 + x^10 + x^6 + x + 1
    15: 0x8003,    # x^15 + x + 1
    16: 0x1100B,   # x^16 + x^12 + x^3 + x + 1
}


class GF2m:
    """The finite field GF(2^m), 1 <= m <= 16."""

    def __init__(self, m: int):
        if m not in REDUCTION_POLY:
            raise ValueError(f"unsupported field exponent m={m}; supported: 1..16")
        self.m = m
        self.order = 1 << m
        self.poly = REDUCTION_POLY[m]
        self._exp, self._log = self._build_tables()

    def _build_tables(self):
        q = self.order
        # exp table doubled so mul can skip one modulo
        exp = [0] * (2 * q)
        log = [0] * q
        x = 1
        for i in range(q - 1):
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & q:
                x ^= self.poly
        if x != 1:  # generator must have full order, i.e. poly is primitive
            raise AssertionError(f"reduction polynomial for m={self.m} is not primitive")
        for i in range(q - 1, 2 * q):
            exp[i] = exp[i - (q - 1)]
        return exp, log

    def add(self, a: int, b: int) -> int:
        return a ^ b

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self._exp[self._log[a] + self._log[b]]

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("0 has no multiplicative inverse")
        return self._exp[(self.order - 1) - self._log[a]]

    def random_element(self, rng: random.Random, nonzero_only: bool = False) -> int:
        """Uniform draw over the field, or over its nonzero elements when flagged."""
        if nonzero_only:
            return rng.randrange(1, self.order)
        return rng.randrange(self.order)

    def random_vector(self, rng: random.Random, n: int) -> tuple[int, ...]:
        q = self.order
        return tuple(rng.randrange(q) for _ in range(n))

    def rank(self, rows: Sequence[Sequence[int]], stop_at: int | None = None) -> int:
        """Rank of a matrix given as row vectors, by Gaussian elimination.

        Stops early once `stop_at` independent rows were found (enough for
        the >= R decodability test).
        """
        work = [list(r) for r in rows if any(r)]
        if not work:
            return 0
        ncols = len(work[0])
        mul, inv, exp, log = self.mul, self.inv, self._exp, self._log
        rank = 0
        for col in range(ncols):
            pivot = None
            for r in range(rank, len(work)):
                if work[r][col]:
                    pivot = r
                    break
            if pivot is None:
                continue
            work[rank], work[pivot] = work[pivot], work[rank]
            prow = work[rank]
            pinv = inv(prow[col])
            for r in range(rank + 1, len(work)):
                row = work[r]
                v = row[col]
                if v:
                    factor = mul(v, pinv)
                    flog = log[factor]
                    for c in range(col, ncols):
                        pv = prow[c]
                        if pv:
                            row[c] ^= exp[flog + log[pv]]
            rank += 1
            if stop_at is not None and rank >= stop_at:
                return rank
            if rank == len(work):
                break
        return rank


_FIELDS: dict[int, GF2m] = {}


def field(m: int) -> GF2m:
    """Shared GF(2^m) instance (tables are built once per exponent)."""
    f = _FIELDS.get(m)
    if f is None:
        f = _FIELDS[m] = GF2m(m)
    return f
