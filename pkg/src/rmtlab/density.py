"""Joint eigenvalue density of ``G G^T`` and the helpers built on it.

The unnormalised density on the ordered sector
``lambda_1 >= ... >= lambda_n >= 0`` is

    exp(-sum(lambda) / 2) * prod_{i<j} (lambda_i - lambda_j) * prod lambda_i^{-1/2}

and is always handled in log space.  In singular-value coordinates
``x_i = sqrt(lambda_i)`` the measure becomes
``2^n exp(-|x|^2 / 2) prod_{i<j} (x_i^2 - x_j^2) dx``, which is smooth, so all
quadratures here are done in ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import (
    CapacityError,
    DomainError,
    InconsistentMomentsError,
    NonTerminationError,
    PreconditionError,
)
from .rng import RngStream

U_SEARCH_CAP = 200
MAX_NORMALIZING_DIM = 3


@dataclass(frozen=True)
class TailConstants:
    c_szarek: float = 1.0
    c_hs: float = 1.0

    def __post_init__(self):
        if not (self.c_szarek >= 1.0 and self.c_hs >= 1.0):
            raise DomainError("tail constants must both be >= 1")


@dataclass(frozen=True)
class NormalizingConstant:
    value: float
    std_error: float
    trials: int

    @property
    def rel_se(self) -> float:
        return self.std_error / self.value


def check_eigen_tuple(lambdas) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lambdas, dtype=np.float64))
    if lam.ndim != 1 or lam.size == 0:
        raise DomainError("expected a non-empty vector of eigenvalues")
    if not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise DomainError("eigenvalues must be finite and non-negative")
    if np.any(np.diff(lam) > 0):
        raise PreconditionError("eigenvalues must be sorted non-increasing")
    return lam


def log_joint_density_unnormalized(lambdas) -> float:
    """Log of the unnormalised joint density at an ordered eigenvalue tuple.

    Ties give ``-inf`` (the Vandermonde factor vanishes).  A zero smallest
    eigenvalue without ties gives ``+inf`` from the ``lambda^{-1/2}`` factor.
    Unsorted input is rejected rather than reordered.
    """
    lam = check_eigen_tuple(lambdas)
    gaps = lam[:, None] - lam[None, :]
    upper = gaps[np.triu_indices(lam.size, 1)]
    if np.any(upper == 0):
        return -math.inf
    if lam[-1] == 0:
        return math.inf
    return float(-0.5 * lam.sum() + np.sum(np.log(upper)) - 0.5 * np.sum(np.log(lam)))


def sample_eigenvalues(n: int, count: int, rng: RngStream) -> np.ndarray:
    """Eigenvalues of ``G G^T`` for ``count`` Gaussian ``G``, rows sorted non-increasing."""
    g = rng.standard_normal((count, n, n))
    return np.linalg.svd(g, compute_uv=False) ** 2


def _x_density(*x) -> float:
    # integrand in singular-value coordinates, x[0] >= x[1] >= ...
    n = len(x)
    val = 2.0 ** n * math.exp(-0.5 * sum(v * v for v in x))
    for a in range(n):
        for b in range(a + 1, n):
            val *= x[a] * x[a] - x[b] * x[b]
    return val


def ordered_sector_integral(n: int, lambda_max: float = math.inf) -> float:
    """Integral of the unnormalised density over ``{lambda_max >= lambda_1 >= ... >= lambda_n >= 0}``."""
    if not 1 <= n <= MAX_NORMALIZING_DIM:
        raise CapacityError(f"quadrature limited to n <= {MAX_NORMALIZING_DIM}")
    top = math.sqrt(lambda_max) if math.isfinite(lambda_max) else math.inf
    if n == 1:
        return integrate.quad(lambda x: _x_density(x), 0, top, epsabs=1e-13, epsrel=1e-12)[0]
    # nquad integrates the first argument innermost: order (x_n, ..., x_1)
    ranges = [lambda *outer: (0.0, outer[0]) for _ in range(n - 1)] + [(0.0, top)]

    def f(*xs):
        return _x_density(*reversed(xs))

    return integrate.nquad(f, ranges, opts={"epsabs": 1e-13, "epsrel": 1e-11})[0]


def normalizing_constant_quadrature(n: int) -> float:
    return 1.0 / ordered_sector_integral(n)


def normalizing_constant(n: int, mc_trials: int, rng: RngStream) -> NormalizingConstant:
    """Monte Carlo estimate of the normalising factor ``c(n)``.

    The fraction of sampled eigenvalue tuples inside ``A = {lambda_1 <= L}``
    estimates ``c(n) * integral_A rho``; the integral is done by quadrature.
    """
    if not 1 <= n <= MAX_NORMALIZING_DIM:
        raise CapacityError(f"normalizing constant limited to n <= {MAX_NORMALIZING_DIM}")
    if mc_trials < 2:
        raise PreconditionError("need at least two samples")
    cutoff = 6.0 * n
    lam = sample_eigenvalues(n, mc_trials, rng)
    p_hat = float(np.mean(lam[:, 0] <= cutoff))
    mass = ordered_sector_integral(n, cutoff)
    se = math.sqrt(p_hat * (1 - p_hat) / mc_trials) / mass
    return NormalizingConstant(p_hat / mass, se, mc_trials)


def _inner_y(x, y):
    # integral over [0, y] of exp(-u^2/2) (x^2 - u^2) du
    gauss = math.sqrt(math.pi / 2) * special.erf(y / math.sqrt(2))
    return (x * x - 1.0) * gauss + y * np.exp(-0.5 * y * y)


def density_cell_masses_2d(edges1, edges2, order: int = 24) -> np.ndarray:
    """Normalised probability of each ``(lambda_1, lambda_2)`` cell for ``n = 2``.

    The inner integral over ``x_2`` is closed-form; the outer one uses
    Gauss-Legendre nodes split at the kink where the sector boundary crosses.
    """
    e1 = np.sqrt(np.asarray(edges1, dtype=np.float64))
    e2 = np.sqrt(np.asarray(edges2, dtype=np.float64))
    nodes, weights = np.polynomial.legendre.leggauss(order)
    c2 = normalizing_constant_quadrature(2)
    out = np.zeros((e1.size - 1, e2.size - 1))

    def outer(x_lo, x_hi, y_lo, y_hi):
        if x_hi <= x_lo:
            return 0.0
        x = 0.5 * (x_hi - x_lo) * nodes + 0.5 * (x_hi + x_lo)
        top = np.minimum(y_hi, x)
        inner = np.where(top > y_lo, _inner_y(x, top) - _inner_y(x, np.minimum(y_lo, top)), 0.0)
        vals = 4.0 * np.exp(-0.5 * x * x) * inner
        return 0.5 * (x_hi - x_lo) * float(np.dot(weights, vals))

    for a in range(e1.size - 1):
        for b in range(e2.size - 1):
            x_lo, x_hi = e1[a], e1[a + 1]
            y_lo, y_hi = e2[b], e2[b + 1]
            if x_hi <= y_lo:
                continue
            split = min(max(y_hi, x_lo), x_hi)
            mass = outer(max(x_lo, y_lo), split, y_lo, y_hi) + outer(split, x_hi, y_lo, y_hi)
            out[a, b] = c2 * mass
    return out


def histogram_tv_distance_2d(lam: np.ndarray, edges1, edges2) -> float:
    """Total-variation distance between sampled ``n = 2`` eigenvalue pairs and the exact density.

    Mass outside the grid is pooled into one overflow cell on both sides.
    """
    counts, _, _ = np.histogram2d(lam[:, 0], lam[:, 1], bins=[edges1, edges2])
    emp = counts / lam.shape[0]
    exact = density_cell_masses_2d(edges1, edges2)
    emp_over = 1.0 - emp.sum()
    exact_over = 1.0 - exact.sum()
    return 0.5 * float(np.abs(emp - exact).sum() + abs(emp_over - exact_over))


def smallest_eigenvalue_marginal_tv(lam: np.ndarray, edges2) -> float:
    """TV distance of the ``lambda_2`` marginal (``n = 2``) against the exact density."""
    counts, _ = np.histogram(lam[:, 1], bins=edges2)
    emp = counts / lam.shape[0]
    exact = density_cell_masses_2d(np.linspace(0.0, 100.0, 401), edges2).sum(axis=0)
    return 0.5 * float(np.abs(emp - exact).sum() + abs((1 - emp.sum()) - (1 - exact.sum())))


def in_l_prime(a_prime, t: float, constants: TailConstants) -> bool:
    """Membership of ``a'`` (the top ``n - 1`` eigenvalues) in the admissible set."""
    a = np.asarray(a_prime, dtype=np.float64)
    if a.ndim != 1 or np.any(np.diff(a) > 0) or np.any(a <= 0):
        return False
    n = a.size + 1
    return bool(np.sum(1.0 / a) <= 4.0 * constants.c_hs * constants.c_szarek * t * t * n)


def compute_u(a_prime, t: float, constants: TailConstants, cap: int = U_SEARCH_CAP) -> int:
    """Smallest ``u >= 0`` at which the density drops by at most a factor 4.

    With ``D = 16 c_hs^2 c_szarek^4 t^2 n`` this is the first ``u`` with
    ``rho(a', 4^{-u-1}/D) <= 4 rho(a', 4^{-u}/D)``.  Only log-density
    differences are used, so the normalising factor never enters.
    """
    if t < 1:
        raise PreconditionError("t must be at least 1")
    a = np.asarray(a_prime, dtype=np.float64)
    if not in_l_prime(a, t, constants):
        raise PreconditionError("a_prime is not in the admissible set")
    n = a.size + 1
    d = 16.0 * constants.c_hs ** 2 * constants.c_szarek ** 4 * t * t * n
    log4 = math.log(4.0)
    for u in range(cap + 1):
        hi = 4.0 ** (-u) / d
        lo = hi / 4.0
        if hi > a[-1]:
            raise PreconditionError("evaluation point leaves the ordered sector")
        rho_lo = log_joint_density_unnormalized(np.append(a, lo))
        rho_hi = log_joint_density_unnormalized(np.append(a, hi))
        if rho_lo <= log4 + rho_hi:
            return u
    raise NonTerminationError(f"no admissible u found up to {cap}")


def paley_zygmund_lower_bound(mean: float, second_moment: float, theta: float) -> float:
    """``(1 - theta)^2 E[Z]^2 / E[Z^2]``, a lower bound on ``P{Z >= theta E[Z]}``."""
    if mean < 0 or not second_moment > 0:
        raise DomainError("need mean >= 0 and second_moment > 0")
    if not 0 <= theta < 1:
        raise DomainError("theta must lie in [0, 1)")
    if second_moment < mean * mean - 1e-12:
        raise InconsistentMomentsError("second moment is smaller than the squared mean")
    return min(max((1 - theta) ** 2 * mean * mean / second_moment, 0.0), 1.0)
