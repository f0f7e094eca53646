"""Randomized embedding of l_p^d (p in [1,2]) into the hypercube.

Each output bit applies a random sign function to the floor-bucket of a
stably-projected, randomly shifted coordinate:

    f(x) = g( floor((<x, z> - h) / R) )

with z a vector of p-stable scalars (Bernoulli(1/d) when p = 1), h uniform
in [0, R], and g a keyed random sign of the bucket index. For points within
the scale regime ||x - y||_p <= R / t_p the expected Hamming distance of the
concatenation of d_out bits is proportional to d_out * ||x - y||_p / R, so a
sampled family is a constant-distortion embedding of a fixed small set with
good probability.

R is supplied by the caller (t_p times the max pairwise distance is the
intended choice); the library does not estimate aspect ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hashing as hx
from .hashing import U64
from .points import HypercubePoint
from .sketches import sample_p_stable_array

__all__ = ["EmbeddingFamily", "sample_embedding", "embed_point"]

_SALT_Z_R = 0xEB01
_SALT_Z_T = 0xEB02
_SALT_SHIFT = 0xEB03
_SALT_SIGN = 0xEB04


@dataclass(frozen=True)
class EmbeddingFamily:
    """Sampled parameters of one embedding R^d_in -> {0,1}^d_out.

    Stable scalars and shifts are derived from the seed on demand; the random
    sign function g: Z -> {0,1} is a keyed hash of the bucket index (its
    domain is unbounded, so a stored table would not do).
    """

    d_in: int
    d_out: int
    p: float
    R: float
    seed: int
    t_p: float = 8.0  # scale-regime constant, exposed as a knob

    def __post_init__(self):
        if not 1.0 <= self.p <= 2.0:
            raise ValueError(f"p must be in [1, 2], got {self.p}")
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.d_in <= 0 or self.d_out <= 0:
            raise ValueError("dimensions must be positive")

    def stable_matrix(self) -> np.ndarray:
        """(d_out, d_in) matrix of per-bit projection scalars."""
        b = np.arange(self.d_out, dtype=U64)[:, None]
        i = np.arange(self.d_in, dtype=U64)[None, :]
        h_r = hx.combine(self.seed, _SALT_Z_R, b, i)
        if self.p == 1.0:
            # Bernoulli(1/d) scalars realize the l1 case
            return (hx.uniform01(h_r) < 1.0 / self.d_in).astype(np.float64)
        h_t = hx.combine(self.seed, _SALT_Z_T, b, i)
        r = hx.uniform01(h_r)
        theta = np.pi * (hx.uniform01(h_t) - 0.5)
        return sample_p_stable_array(self.p, r, theta)

    def shifts(self) -> np.ndarray:
        b = np.arange(self.d_out, dtype=U64)
        return self.R * hx.uniform01(hx.combine(self.seed, _SALT_SHIFT, b))


def sample_embedding(
    d_in: int, d_out: int, p: float, R: float, seed: int, t_p: float = 8.0
) -> EmbeddingFamily:
    return EmbeddingFamily(d_in, d_out, p, R, seed, t_p)


def embed_point(fam: EmbeddingFamily, x: np.ndarray) -> HypercubePoint:
    """Deterministically embed a real vector; total (never fails)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (fam.d_in,):
        raise ValueError(f"expected a vector of length {fam.d_in}")
    proj = fam.stable_matrix() @ x
    buckets = np.floor((proj - fam.shifts()) / fam.R).astype(np.int64)
    # keyed sign of the (unbounded) bucket index; offset keeps the word nonneg
    h = hx.combine(
        fam.seed, _SALT_SIGN, np.arange(fam.d_out, dtype=U64),
        (buckets + (1 << 62)).astype(np.uint64),
    )
    return HypercubePoint.from_bits(hx.bit01(h))
