"""Hypercube points, Hamming distance and point multisets.

A point is a bit vector of fixed dimension d, stored packed (one Python int,
bit 0 of the vector being the most significant bit of the integer, so the hex
serialization reads left to right). Points are immutable and hashable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, Tuple

import numpy as np

__all__ = [
    "HypercubePoint",
    "PointMultiset",
    "hamming_distance",
    "hamming_matrix",
    "points_to_matrix",
]


@dataclass(frozen=True)
class HypercubePoint:
    """An element of {0,1}^d, packed most-significant-bit-first."""

    d: int
    value: int

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError(f"dimension must be positive, got {self.d}")
        if not 0 <= self.value < (1 << self.d):
            raise ValueError("packed value out of range for dimension")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "HypercubePoint":
        bits = list(bits)
        value = 0
        for b in bits:
            value = (value << 1) | (1 if b else 0)
        return cls(len(bits), value)

    @classmethod
    def from_hex(cls, s: str, d: int) -> "HypercubePoint":
        nib = (d + 3) // 4
        if len(s) != nib:
            raise ValueError(f"hex point for d={d} must have {nib} digits, got {s!r}")
        value = int(s, 16)
        # hex is left-padded to whole nibbles: shift out the pad bits
        value >>= nib * 4 - d
        return cls(d, value)

    def to_hex(self) -> str:
        nib = (self.d + 3) // 4
        return format(self.value << (nib * 4 - self.d), f"0{nib}x")

    def bit(self, k: int) -> int:
        """Value of coordinate k (0-indexed from the left)."""
        if not 0 <= k < self.d:
            raise IndexError(k)
        return (self.value >> (self.d - 1 - k)) & 1

    def bits(self) -> np.ndarray:
        """Coordinates as a uint8 array of length d."""
        out = np.empty(self.d, dtype=np.uint8)
        v = self.value
        for k in range(self.d - 1, -1, -1):
            out[k] = v & 1
            v >>= 1
        return out

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits())


def hamming_distance(x: HypercubePoint, y: HypercubePoint) -> int:
    """Number of coordinates where x and y differ."""
    if x.d != y.d:
        raise ValueError(f"dimension mismatch: {x.d} != {y.d}")
    return (x.value ^ y.value).bit_count()


class PointMultiset:
    """Multiset of hypercube points: map point -> nonnegative multiplicity."""

    def __init__(self, d: int):
        self.d = d
        self._counts: Dict[HypercubePoint, int] = {}

    @classmethod
    def from_points(cls, points: Iterable[HypercubePoint]) -> "PointMultiset":
        it = iter(points)
        first = next(it)
        ms = cls(first.d)
        ms.add(first)
        for p in it:
            ms.add(p)
        return ms

    def add(self, p: HypercubePoint, count: int = 1) -> None:
        if p.d != self.d:
            raise ValueError(f"dimension mismatch: {p.d} != {self.d}")
        c = self._counts.get(p, 0) + count
        if c < 0:
            raise ValueError(f"negative multiplicity for {p.to_hex()}")
        if c == 0:
            self._counts.pop(p, None)
        else:
            self._counts[p] = c

    def count(self, p: HypercubePoint) -> int:
        return self._counts.get(p, 0)

    def items(self) -> Iterator[Tuple[HypercubePoint, int]]:
        return iter(self._counts.items())

    def support(self):
        return self._counts.keys()

    @property
    def total(self) -> int:
        return sum(self._counts.values())

    def __len__(self) -> int:
        return self.total

    def __iter__(self) -> Iterator[HypercubePoint]:
        """Iterate points with multiplicity."""
        for p, c in self._counts.items():
            for _ in range(c):
                yield p

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PointMultiset)
            and self.d == other.d
            and self._counts == other._counts
        )


def points_to_matrix(ms: PointMultiset) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct points of a multiset as a (k, d) uint8 matrix plus counts.

    Row order is deterministic (sorted by packed value), so everything derived
    from the matrix is stream-order independent.
    """
    items = sorted(ms.items(), key=lambda pc: pc[0].value)
    if not items:
        return np.zeros((0, ms.d), dtype=np.uint8), np.zeros(0, dtype=np.int64)
    mat = np.stack([p.bits() for p, _ in items])
    counts = np.array([c for _, c in items], dtype=np.int64)
    return mat, counts


_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def hamming_matrix(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """All pairwise Hamming distances between rows of two (n, d) bit matrices."""
    xp = np.packbits(xs.astype(np.uint8), axis=1)
    yp = np.packbits(ys.astype(np.uint8), axis=1)
    out = np.zeros((xp.shape[0], yp.shape[0]), dtype=np.int64)
    for j in range(xp.shape[1]):
        out += _POPCOUNT[xp[:, j][:, None] ^ yp[:, j][None, :]]
    return out
