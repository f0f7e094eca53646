"""Keyed 64-bit hashing and the deterministic variates derived from it.

Every random object in this package (tree coordinates, sketch coefficients,
subsample memberships, exponential scalings) is a pure function of a 64-bit
seed and an index, computed with the splitmix64 finalizer. That makes all
states replayable, mergeable and order-invariant: two processes with the same
seed always derive the same coefficient for the same index.

Functions accept and return numpy uint64 arrays so callers can batch.
"""

from __future__ import annotations

import numpy as np

U64 = np.uint64

_GAMMA = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)

# fills the low 53 bits after shift; keeps uniforms inside the open interval
_INV53 = float(2.0**-53)
_HALF54 = float(2.0**-54)


def mix64(x: np.ndarray | int) -> np.ndarray:
    """splitmix64 finalizer: a bijective mixer on 64-bit words."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=U64) + _GAMMA
        z = (z ^ (z >> U64(30))) * _M1
        z = (z ^ (z >> U64(27))) * _M2
        return z ^ (z >> U64(31))


def combine(*parts) -> np.ndarray:
    """Hash a tuple of 64-bit words/arrays into one word (order-sensitive).

    Broadcasts over array arguments, so combine(seed, np.arange(n)) yields n
    independent-looking streams.
    """
    acc = np.asarray(U64(0x8421_5A5A_C3C3_1E1E))
    for p in parts:
        acc = mix64(acc ^ np.asarray(p, dtype=U64))
    return acc


def uniform01(h: np.ndarray) -> np.ndarray:
    """Map hash words to uniforms in the open interval (0, 1)."""
    return (np.asarray(h, dtype=U64) >> U64(11)).astype(np.float64) * _INV53 + _HALF54


def exp1(h: np.ndarray) -> np.ndarray:
    """Map hash words to Exp(1) variates via inverse CDF."""
    return -np.log(uniform01(h))


def cauchy(h: np.ndarray) -> np.ndarray:
    """Map hash words to standard Cauchy variates, tan(pi (u - 1/2))."""
    return np.tan(np.pi * (uniform01(h) - 0.5))


def sign_pm1(h: np.ndarray) -> np.ndarray:
    """Map hash words to +-1 (float) using one bit."""
    bit = (np.asarray(h, dtype=U64) >> U64(17)) & U64(1)
    return np.where(bit.astype(bool), 1.0, -1.0)


def bit01(h: np.ndarray) -> np.ndarray:
    """Map hash words to a single {0,1} bit."""
    return ((np.asarray(h, dtype=U64) >> U64(23)) & U64(1)).astype(np.uint8)


def bucket(h: np.ndarray, k: int) -> np.ndarray:
    """Map hash words to buckets [0, k); modulo bias is ~k/2^64, negligible."""
    return (np.asarray(h, dtype=U64) % U64(k)).astype(np.int64)


def fingerprint_words(words: np.ndarray, key: int) -> np.ndarray:
    """Hash rows of a (n, w) uint64 matrix to single words (keyed, vectorized)."""
    w = np.asarray(words, dtype=U64)
    if w.ndim == 1:
        w = w[:, None]
    acc = np.full(w.shape[0], U64(key) ^ U64(w.shape[1]), dtype=U64)
    for j in range(w.shape[1]):
        acc = mix64(acc ^ w[:, j])
    return acc
