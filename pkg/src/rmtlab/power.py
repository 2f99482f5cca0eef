"""Singular-value statistics of matrix powers.

``G^{-k}`` is never formed by inverting ``G^k``.  Instead the SVD of ``G``
gives ``G^{-1} = V diag(1/sigma) U^T`` and that factor is multiplied ``k``
times.  Before multiplying, the factor is divided by its spectral norm
``1/s_min`` so intermediate entries stay bounded by one; the scale is restored
in log space when the norms are reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularMatrixError
from .matrices import as_square_matrix, svd

SINGULAR_FLOOR = 1e-280


@dataclass(frozen=True)
class PowerSpectrum:
    n: int
    k: int
    smin_power: float
    hs_inv: float
    spec_inv: float
    method: str = "direct"


def _check_power(k) -> int:
    if isinstance(k, bool) or int(k) != k or k < 0:
        raise DomainError(f"power must be a non-negative integer, got {k!r}")
    return int(k)


def matrix_power(a, k: int) -> np.ndarray:
    """Left-to-right repeated product; ``k == 0`` gives the identity."""
    arr = as_square_matrix(a)
    k = _check_power(k)
    out = np.eye(arr.shape[0])
    for _ in range(k):
        out = out @ arr
    return out


def scaled_frobenius(a: np.ndarray) -> np.ndarray:
    """Frobenius norm over the last two axes, robust to over/underflow."""
    scale = np.max(np.abs(a), axis=(-2, -1))
    safe = np.where(scale > 0, scale, 1.0)
    ratio = a / safe[..., None, None]
    return scale * np.sqrt(np.sum(ratio * ratio, axis=(-2, -1)))


def _rescale(log_scale, value):
    # value * exp(log_scale) without overflowing the intermediate
    with np.errstate(divide="ignore", over="ignore"):
        return np.exp(log_scale + np.log(value))


def inverse_power_stats(u, s, vt, k: int):
    """Spectral and HS norms of ``G^{-k}`` for a stack of SVD factors.

    ``u``, ``s``, ``vt`` are as returned by ``np.linalg.svd`` on a stack.
    Returns ``(spec_inv, hs_inv)`` arrays; entries with ``s_min`` below
    ``SINGULAR_FLOOR`` come back as ``nan``.
    """
    s = np.asarray(s, dtype=np.float64)
    smin = s[..., -1]
    singular = ~(smin > SINGULAR_FLOOR)
    safe_s = np.where(singular[..., None], 1.0, s)
    if k == 1:
        spec = 1.0 / safe_s[..., -1]
        hs = 1.0 / safe_s[..., -1] * np.sqrt(np.sum((safe_s[..., -1:] / safe_s) ** 2, axis=-1))
    else:
        # G^{-1} / ||G^{-1}|| = V diag(s_min / s) U^T
        rel = safe_s[..., -1:] / safe_s
        m = np.swapaxes(vt, -1, -2) * rel[..., None, :] @ np.swapaxes(u, -1, -2)
        p = m
        for _ in range(k - 1):
            p = p @ m
        log_scale = -k * np.log(safe_s[..., -1])
        top = np.linalg.svd(p, compute_uv=False)[..., 0]
        spec = _rescale(log_scale, top)
        hs = _rescale(log_scale, scaled_frobenius(p))
    spec = np.where(singular, np.nan, spec)
    hs = np.where(singular, np.nan, hs)
    return spec, hs


def power_spectrum(g, k: int) -> PowerSpectrum:
    arr = as_square_matrix(g)
    k = _check_power(k)
    if k < 1:
        raise DomainError("power must be at least 1")
    f = svd(arr)
    if not f.s_min > SINGULAR_FLOOR:
        raise SingularMatrixError("matrix is numerically singular")
    if k == 1:
        spec = 1.0 / f.s_min
        hs = float(scaled_frobenius(np.diag(1.0 / f.sigma)))
        return PowerSpectrum(arr.shape[0], 1, f.s_min, hs, spec)
    spec, hs = inverse_power_stats(f.u, f.sigma, f.v.T, k)
    spec, hs = float(spec), float(hs)
    smin = 1.0 / spec if spec > 0 else math.inf
    return PowerSpectrum(arr.shape[0], k, smin, hs, spec)


def smin_of_power(g, k: int) -> float:
    """``s_min(G^k)``, computed as ``1 / ||G^{-k}||`` through the SVD of ``G``."""
    return power_spectrum(g, k).smin_power


def hs_norm_inverse_power(g, k: int) -> float:
    return power_spectrum(g, k).hs_inv


def factored_inverse_power(sigma, q, k: int) -> np.ndarray:
    """``(diag(sigma)^{-1} Q)^{k-1} diag(sigma)^{-1}``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    k = _check_power(k)
    if k < 1:
        raise DomainError("power must be at least 1")
    if sigma.ndim != 1 or not np.all(sigma > 0) or not np.all(np.isfinite(sigma)):
        raise DomainError("sigma must be a vector of positive finite values")
    inv = 1.0 / sigma
    if k == 1:
        return np.diag(inv)
    q = as_square_matrix(q)
    if q.shape[0] != sigma.shape[0]:
        raise DomainError("sigma and q have mismatched dimensions")
    if np.max(np.abs(q.T @ q - np.eye(q.shape[0]))) > 1e-10:
        raise DomainError("q is not orthogonal within 1e-10")
    step = inv[:, None] * q
    out = np.eye(sigma.shape[0])
    for _ in range(k - 1):
        out = out @ step
    return out * inv[None, :]


def factored_hs_batch(sigma: np.ndarray, q: np.ndarray, k: int) -> np.ndarray:
    """HS norms of the factored representation for stacks of ``sigma`` and ``Q``.

    Scaled like ``inverse_power_stats``: ``sigma`` is normalised by its
    smallest entry so the accumulated product stays bounded.
    """
    smin = sigma[..., -1:]
    rel = smin / sigma
    if k == 1:
        return np.sqrt(np.sum(rel * rel, axis=-1)) / smin[..., 0]
    step = rel[..., :, None] * q
    p = step
    for _ in range(k - 2):
        p = p @ step
    p = p * rel[..., None, :]
    return _rescale(-k * np.log(smin[..., 0]), scaled_frobenius(p))
