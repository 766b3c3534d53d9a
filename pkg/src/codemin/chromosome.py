"""Block-structured binary encoding of coding decisions.

A chromosome is a `bytes` vector of 0/1 values, one bit per (incoming link,
outgoing link) pair of a merging node. Bits are grouped into blocks, one
block per outgoing link of a merging node; a link codes iff its block has
two or more active bits. The block-wise representation restricts each
length-k block to the k+2 strings {all-zero, the k unit vectors, all-one}.
"""

from __future__ import annotations

import functools
import hashlib
import random
from dataclasses import dataclass
from typing import NamedTuple

from .topology import MulticastInstance, attach_virtual_sinks, coding_blocks

BLOCK = "block"
BIT = "bit"
REPRESENTATIONS = (BLOCK, BIT)


class Block(NamedTuple):
    node: str
    out_link: int
    k: int
    offset: int
    in_links: tuple[int, ...]  # ascending link ids; defines bit order


@dataclass(frozen=True)
class Layout:
    """Block structure of a multicast instance's chromosomes."""
    blocks: tuple[Block, ...]

    @property
    def m(self) -> int:
        """Total number of bits."""
        return sum(b.k for b in self.blocks)

    @property
    def w(self) -> int:
        """Number of blocks."""
        return len(self.blocks)

    def block_of_bit(self, bit: int) -> Block:
        for b in self.blocks:
            if b.offset <= bit < b.offset + b.k:
                return b
        raise IndexError(bit)

    def hash8(self) -> str:
        canon = ";".join(f"{b.node},{b.out_link},{','.join(map(str, b.in_links))}"
                         for b in self.blocks)
        return hashlib.sha256(canon.encode()).hexdigest()[:8]


def layout_of(g: MulticastInstance) -> Layout:
    """One block per (merging node, outgoing link); sinks with outgoing links
    are handled through their virtual-sink augmentation."""
    aug, _ = attach_virtual_sinks(g)
    blocks = []
    offset = 0
    for node, out_id, ins in coding_blocks(aug):
        blocks.append(Block(node, out_id, len(ins), offset, ins))
        offset += len(ins)
    return Layout(tuple(blocks))


def all_one(layout: Layout) -> bytes:
    return b"\x01" * layout.m


def count_coding_links(bits: bytes, layout: Layout) -> int:
    """Number of blocks with at least two active bits."""
    if len(bits) != layout.m:
        raise ValueError(f"chromosome length {len(bits)} != layout length {layout.m}")
    n = 0
    for b in layout.blocks:
        if bits.count(1, b.offset, b.offset + b.k) >= 2:
            n += 1
    return n


@functools.lru_cache(maxsize=None)
def allowed_block_strings(k: int) -> tuple[bytes, ...]:
    """The k+2 block-wise strings: no transmission, k uncoded, coded."""
    strings = [bytes(k)]
    for i in range(k):
        s = bytearray(k)
        s[i] = 1
        strings.append(bytes(s))
    strings.append(b"\x01" * k)
    return tuple(strings)


def is_blockwise_valid(bits: bytes, layout: Layout) -> bool:
    for b in layout.blocks:
        ones = bits.count(1, b.offset, b.offset + b.k)
        if 1 < ones < b.k:
            return False
    return True


def sample_chromosome(layout: Layout, representation: str, rng: random.Random) -> bytes:
    """Uniform chromosome: per-block over allowed strings (block-wise) or
    per-bit over {0,1} (bit-wise)."""
    if representation == BIT:
        return bytes(rng.randrange(2) for _ in range(layout.m))
    if representation == BLOCK:
        out = bytearray(layout.m)
        for b in layout.blocks:
            choice = rng.randrange(b.k + 2)
            if choice == 0:
                pass  # no-transmission state
            elif choice <= b.k:
                out[b.offset + choice - 1] = 1
            else:
                out[b.offset:b.offset + b.k] = b"\x01" * b.k
        return bytes(out)
    raise ValueError(f"unknown representation {representation!r}")


def search_space_size(layout: Layout, representation: str) -> int:
    if representation == BIT:
        return 1 << layout.m
    if representation == BLOCK:
        size = 1
        for b in layout.blocks:
            size *= b.k + 2
        return size
    raise ValueError(f"unknown representation {representation!r}")


# ---------------------------------------------------------------------------
# Fitness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Fitness:
    """Coding-link count, or the infeasible sentinel which orders above
    every finite value."""
    coding_links: int | None = None

    @classmethod
    def finite(cls, n: int) -> "Fitness":
        if n < 0:
            raise ValueError("coding-link count cannot be negative")
        return cls(n)

    @property
    def is_feasible(self) -> bool:
        return self.coding_links is not None

    def _key(self):
        return (self.coding_links is None, self.coding_links or 0)

    def __lt__(self, other):
        return self._key() < other._key()

    def __le__(self, other):
        return self._key() <= other._key()

    def __gt__(self, other):
        return other < self

    def __ge__(self, other):
        return other <= self

    def __str__(self):
        return "inf" if self.coding_links is None else str(self.coding_links)


INFEASIBLE = Fitness(None)


# ---------------------------------------------------------------------------
# Serialization: hex string with a layout-hash prefix
# ---------------------------------------------------------------------------

def chromosome_to_str(bits: bytes, layout: Layout) -> str:
    if len(bits) != layout.m:
        raise ValueError(f"chromosome length {len(bits)} != layout length {layout.m}")
    packed = bytearray((layout.m + 7) // 8)
    for i, v in enumerate(bits):
        if v:
            packed[i // 8] |= 0x80 >> (i % 8)
    return f"{layout.hash8()}:{packed.hex()}"


def chromosome_from_str(text: str, layout: Layout) -> bytes:
    try:
        prefix, hexpart = text.strip().split(":")
        packed = bytes.fromhex(hexpart)
    except ValueError as e:
        raise ValueError(f"malformed chromosome string {text!r}") from e
    if prefix != layout.hash8():
        raise ValueError(
            f"chromosome layout hash {prefix} does not match this topology's layout "
            f"({layout.hash8()}); it was serialized for a different network")
    if len(packed) != (layout.m + 7) // 8:
        raise ValueError(f"chromosome payload holds {len(packed) * 8} bits, need {layout.m}")
    bits = bytearray(layout.m)
    for i in range(layout.m):
        if packed[i // 8] & (0x80 >> (i % 8)):
            bits[i] = 1
    return bytes(bits)
