"""PCG32 (XSH-RR, 64-bit state) random generator.

Monitor-set selection and pool member draws use this generator rather than
numpy's so the exact sequence is pinned down by a few lines of arithmetic and
can be reproduced in any language::

    seed(initstate, initseq):
        state = 0; inc = (initseq << 1) | 1
        next(); state += initstate; next()
    next():
        old = state
        state = old * 6364136223846793005 + inc          (mod 2**64)
        xorshifted = (((old >> 18) ^ old) >> 27)          (mod 2**32)
        rot = old >> 59
        return rotate_right_32(xorshifted, rot)
    bounded(n):  # unbiased draw in [0, n)
        threshold = (2**32 - n) % n
        repeat r = next() until r >= threshold; return r % n

A generator is identified by ``(seed, stream)``; distinct streams with one
seed are statistically independent sequences.
"""
from __future__ import annotations

from typing import List, Sequence, TypeVar

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1
_MULT = 6364136223846793005

T = TypeVar("T")


class PCG32:
    __slots__ = ("state", "inc")

    def __init__(self, seed: int, stream: int = 0):
        self.state = 0
        self.inc = ((int(stream) << 1) | 1) & _MASK64
        self.next_u32()
        self.state = (self.state + (int(seed) & _MASK64)) & _MASK64
        self.next_u32()

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * _MULT + self.inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def bounded(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by rejection (no modulo bias)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = ((1 << 32) - bound) % bound
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % bound

    def random(self) -> float:
        """Uniform float in ``[0, 1)`` with 32 bits of resolution."""
        return self.next_u32() / 4294967296.0

    def sample(self, population: Sequence[T], k: int) -> List[T]:
        """First ``k`` slots of a partial Fisher-Yates shuffle of ``population``."""
        items = list(population)
        n = len(items)
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} items from {n}")
        for i in range(k):
            j = i + self.bounded(n - i)
            items[i], items[j] = items[j], items[i]
        return items[:k]
