"""Matrix ensembles and core factorizations.

Square matrices are plain ``float64`` numpy arrays of shape ``(n, n)``.
Batched samplers return stacks of shape ``(count, n, n)``; drawing a stack
of ``count`` matrices consumes the stream exactly as ``count`` successive
single draws would (row-major fill, one matrix after another).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidDimensionError, InvalidInputError
from .rng import RngStream


class EntryDistribution(str, enum.Enum):
    """Mean-zero, unit-variance laws for i.i.d. matrix entries."""

    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM_UNIT_VARIANCE = "uniform_unit_variance"

    @classmethod
    def parse(cls, value) -> "EntryDistribution":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(d.value for d in cls)
            raise ConfigError(f"unknown entry distribution {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class SvdFactors:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def s_max(self) -> float:
        return float(self.sigma[0])

    @property
    def s_min(self) -> float:
        return float(self.sigma[-1])

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def check_dimension(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {n!r}")
    return int(n)


def as_square_matrix(a) -> np.ndarray:
    """Validate and convert to a finite ``(n, n)`` float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise InvalidDimensionError(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("matrix has non-finite entries")
    return arr


def gaussian_batch(n: int, count: int, rng: RngStream) -> np.ndarray:
    n = check_dimension(n)
    return rng.standard_normal((count, n, n))


def iid_batch(n: int, count: int, dist, rng: RngStream) -> np.ndarray:
    dist = EntryDistribution.parse(dist)
    n = check_dimension(n)
    gen = rng.generator
    if dist is EntryDistribution.GAUSSIAN:
        return gen.standard_normal((count, n, n))
    if dist is EntryDistribution.RADEMACHER:
        return 2.0 * gen.integers(0, 2, size=(count, n, n)).astype(np.float64) - 1.0
    root3 = math.sqrt(3.0)
    return gen.uniform(-root3, root3, size=(count, n, n))


def haar_batch(n: int, count: int, rng: RngStream) -> np.ndarray:
    """Haar-distributed orthogonal matrices via sign-corrected QR."""
    z = gaussian_batch(n, count, rng)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    signs = np.where(d < 0, -1.0, 1.0)
    return q * signs[..., None, :]


def sample_gaussian_matrix(n: int, rng: RngStream) -> np.ndarray:
    return gaussian_batch(n, 1, rng)[0]


def sample_haar_orthogonal(n: int, rng: RngStream) -> np.ndarray:
    return haar_batch(n, 1, rng)[0]


def sample_iid_matrix(n: int, dist, rng: RngStream) -> np.ndarray:
    return iid_batch(n, 1, dist, rng)[0]


def svd(a) -> SvdFactors:
    """Dense SVD with singular values sorted non-increasing (stable on ties)."""
    arr = as_square_matrix(a)
    u, s, vt = np.linalg.svd(arr)
    order = np.argsort(-s, kind="stable")
    return SvdFactors(u[:, order], s[order], vt[order].T)


def condition_number(a) -> float:
    """``s_max / s_min``; ``math.inf`` for a singular matrix."""
    s = np.linalg.svd(as_square_matrix(a), compute_uv=False)
    if s[-1] == 0.0:
        return math.inf
    return float(s[0] / s[-1])
