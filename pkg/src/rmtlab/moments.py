"""Entry moments of ``(T W)^k T`` for diagonal ``T`` and Haar orthogonal ``W``.

Indices are 0-based throughout.  Index vectors are tuples of ints in
``range(n)``.  The even-multiplicity set is the set of index vectors in which
every symbol occurs an even number of times; only those survive averaging
over independent random sign flips of the rows of ``W``.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import CapacityError, DomainError, PreconditionError
from .matrices import as_square_matrix, haar_batch
from .rng import BLOCK_SIZE, RngStream

MAX_ENUM_LENGTH = 16
MAX_SYMMETRIZED_LENGTH = 8
MAX_PATH_TERMS = 2_000_000
MAX_SIGN_DIM = 12
MIN_MC_TRIALS = 1000


@dataclass(frozen=True)
class MomentReport:
    estimate: float
    std_error: float
    trials: int
    bound_value: float
    empirical_constant: float


@dataclass(frozen=True)
class ScanResult:
    s: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    normalized: np.ndarray
    threshold: float
    c_used: float
    c_measured: float
    exceed_fraction: float
    leading_coefficient: float | None
    leading_coefficient_se: float | None
    trials: int


def check_taus(taus) -> np.ndarray:
    t = np.asarray(taus, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise DomainError("taus must be a non-empty vector")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise DomainError("taus must be finite and non-negative")
    return t


def _check_index(i, n: int, name: str = "index") -> int:
    if isinstance(i, bool) or int(i) != i or not 0 <= i < n:
        raise DomainError(f"{name} {i!r} out of range for dimension {n}")
    return int(i)


def jackknife_se(values: np.ndarray) -> float:
    """Leave-one-out jackknife standard error of the sample mean."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 2:
        return math.nan
    loo = (x.sum() - x) / (n - 1)
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def entry_of_power(b, k: int, i: int, j: int) -> float:
    """``(B^k)_{ij}`` as the explicit sum over index paths of length ``k - 1``."""
    b = as_square_matrix(b)
    n = b.shape[0]
    i = _check_index(i, n, "row index")
    j = _check_index(j, n, "column index")
    if k < 1:
        raise DomainError("power must be at least 1")
    if n ** (k - 1) > MAX_PATH_TERMS:
        raise CapacityError(f"{n}^{k - 1} index paths exceed the enumeration guard")
    total = 0.0
    for alpha in itertools.product(range(n), repeat=k - 1):
        path = (i, *alpha, j)
        term = 1.0
        for a, c in zip(path, path[1:]):
            term *= b[a, c]
        total += term
    return total


def iter_even_multisets(n: int, length: int) -> Iterator[tuple[int, ...]]:
    """Yield, in lexicographic order, vectors in ``range(n)^length`` with all multiplicities even."""
    if length % 2:
        return
    counts = [0] * n
    prefix: list[int] = []

    def rec(odd: int) -> Iterator[tuple[int, ...]]:
        remaining = length - len(prefix)
        if remaining == 0:
            if odd == 0:
                yield tuple(prefix)
            return
        for h in range(n):
            new_odd = odd + (1 if counts[h] % 2 == 0 else -1)
            # every odd symbol needs at least one more occurrence
            if new_odd > remaining - 1:
                continue
            counts[h] += 1
            prefix.append(h)
            yield from rec(new_odd)
            prefix.pop()
            counts[h] -= 1

    yield from rec(0)


def enumerate_even_multisets(n: int, length: int) -> list[tuple[int, ...]]:
    if n < 1:
        raise DomainError("alphabet size must be positive")
    if length < 0:
        raise DomainError("length must be non-negative")
    if length > MAX_ENUM_LENGTH:
        raise CapacityError(f"length {length} exceeds the enumeration guard {MAX_ENUM_LENGTH}")
    return list(iter_even_multisets(n, length))


def is_even_multiset(alpha: Sequence[int]) -> bool:
    return all(c % 2 == 0 for c in Counter(alpha).values())


def pairing_map(alpha: Sequence[int]) -> tuple[int, ...]:
    """Pair off an even-multiplicity vector by repeated erasure.

    Each step records the current first component, then erases it together
    with the earliest other remaining component carrying the same value.
    """
    if not is_even_multiset(alpha):
        raise PreconditionError(f"{tuple(alpha)} has a symbol of odd multiplicity")
    gamma = list(alpha)
    beta = []
    while gamma:
        head = gamma.pop(0)
        beta.append(head)
        gamma.pop(gamma.index(head))
    return tuple(beta)


def w_product(w, i: int, j: int, alpha: Sequence[int], m: int, k: int):
    """Product over ``m`` blocks of the path weights ``w_{i a_1} w_{a_1 a_2} ... w_{a_{k-1} j}``.

    ``w`` may be a single matrix or a stack ``(B, n, n)``; the result has the
    matching leading shape.
    """
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[-1]
    i = _check_index(i, n)
    j = _check_index(j, n)
    if m < 1 or k < 1:
        raise DomainError("m and k must be positive")
    if len(alpha) != m * (k - 1):
        raise DomainError(f"alpha has length {len(alpha)}, expected m(k-1) = {m * (k - 1)}")
    for a in alpha:
        _check_index(a, n)
    out = np.ones(w.shape[:-2])
    step = k - 1
    for block in range(m):
        path = (i, *alpha[block * step:(block + 1) * step], j)
        for a, c in zip(path, path[1:]):
            out = out * w[..., a, c]
    return out if out.ndim else float(out)


def _sign_patterns(n: int) -> np.ndarray:
    if n > MAX_SIGN_DIM:
        raise CapacityError(f"exact sign averaging limited to n <= {MAX_SIGN_DIM}")
    return np.array(list(itertools.product((1.0, -1.0), repeat=n)))


def entry_power_samples(taus, k: int, i: int, j: int, w: np.ndarray, symmetrize: bool = False) -> np.ndarray:
    """``((T W)^k T)_{ij}`` for each matrix of the stack ``w``.

    With ``symmetrize`` the return has an extra axis over all ``2^n`` sign
    matrices ``P``, holding ``((T P W)^k T)_{ij}``.
    """
    t = check_taus(taus)
    n = t.size
    weights = t[None, :]
    if symmetrize:
        weights = _sign_patterns(n) * t[None, :]
    v = np.zeros((w.shape[0], weights.shape[0], n))
    v[:, :, i] = 1.0
    for _ in range(k):
        v = (v * weights[None]) @ w
    out = v[:, :, j] * t[j]
    return out if symmetrize else out[:, 0]


def _haar_draws(n: int, trials: int, rng: RngStream):
    done = 0
    while done < trials:
        size = min(BLOCK_SIZE, trials - done)
        yield haar_batch(n, size, rng)
        done += size


def moment_bound(taus, k: int, m: int, i: int, j: int) -> float:
    """``tau_i^m tau_j^m ||T||_HS^{m(k-1)} n^{-km/2}``."""
    t = check_taus(taus)
    n = t.size
    hs = math.sqrt(float(np.sum(t * t)))
    return float(t[i] ** m * t[j] ** m * hs ** (m * (k - 1)) * n ** (-k * m / 2))


def _report(values: np.ndarray, bound: float) -> MomentReport:
    est = float(np.mean(values))
    const = est / bound if bound > 0 else math.nan
    return MomentReport(est, jackknife_se(values), int(values.size), bound, const)


def _check_mc_args(taus, k, m, i, j, trials):
    t = check_taus(taus)
    n = t.size
    i = _check_index(i, n, "row index")
    j = _check_index(j, n, "column index")
    if k < 1 or m < 1:
        raise DomainError("k and m must be positive")
    if trials < MIN_MC_TRIALS:
        raise PreconditionError(f"at least {MIN_MC_TRIALS} trials required")
    return t, n, i, j


def entry_moment_samples(taus, k, m, i, j, trials, rng, symmetrize=False) -> np.ndarray:
    t, n, i, j = _check_mc_args(taus, k, m, i, j, trials)
    parts = []
    for w in _haar_draws(n, trials, rng):
        x = entry_power_samples(t, k, i, j, w, symmetrize=symmetrize) ** m
        parts.append(x.mean(axis=1) if symmetrize else x)
    return np.concatenate(parts)


def entry_moment_mc(taus, k: int, m: int, i: int, j: int, trials: int, rng: RngStream,
                    symmetrize: bool = False) -> MomentReport:
    """Monte Carlo estimate of ``E[((T W)^k T)_{ij}^m]`` over Haar ``W``.

    With ``symmetrize`` each Haar sample is averaged exactly over all sign
    matrices ``P`` (``W -> P W``), which leaves the expectation unchanged.
    """
    values = entry_moment_samples(taus, k, m, i, j, trials, rng, symmetrize)
    return _report(values, moment_bound(taus, k, m, i, j))


def _symmetrized_terms(t: np.ndarray, k: int, m: int, i: int, j: int):
    length = m * (k - 1)
    if length > MAX_SYMMETRIZED_LENGTH:
        raise CapacityError(f"m(k-1) = {length} exceeds the guard {MAX_SYMMETRIZED_LENGTH}")
    terms = []
    for alpha in iter_even_multisets(t.size, length):
        weight = float(np.prod(t[list(alpha)])) if alpha else 1.0
        if weight != 0.0:
            terms.append((alpha, weight))
    return terms


def symmetrized_samples(t: np.ndarray, k: int, m: int, i: int, j: int, w: np.ndarray) -> np.ndarray:
    """Per-sample ``tau_i^m tau_j^m sum_{alpha even} prod(tau_alpha) w_{i,j,alpha}``."""
    out = np.zeros(w.shape[0])
    for alpha, weight in _symmetrized_terms(t, k, m, i, j):
        out += weight * w_product(w, i, j, alpha, m, k)
    return out * t[i] ** m * t[j] ** m


def symmetrized_moment_sum(taus, k: int, m: int, i: int, j: int, trials: int,
                           rng: RngStream) -> MomentReport:
    """Moment estimate restricted to even-multiplicity index vectors."""
    t, n, i, j = _check_mc_args(taus, k, m, i, j, trials)
    if m % 2:
        raise PreconditionError("m must be even")
    _symmetrized_terms(t, k, m, i, j)
    parts = [symmetrized_samples(t, k, m, i, j, w) for w in _haar_draws(n, trials, rng)]
    return _report(np.concatenate(parts), moment_bound(t, k, m, i, j))


@dataclass(frozen=True)
class PairedComparison:
    direct: MomentReport
    symmetrized: MomentReport
    difference: float
    difference_se: float

    @property
    def z_score(self) -> float:
        # for k = 1 both estimators compute the same products in a different order
        scale = max(abs(self.direct.estimate), abs(self.symmetrized.estimate))
        if abs(self.difference) <= 1e-12 * scale:
            return 0.0
        if self.difference_se == 0:
            return 0.0 if self.difference == 0 else math.inf
        return abs(self.difference) / self.difference_se


def paired_symmetrization_check(taus, k: int, m: int, i: int, j: int, trials: int,
                                rng: RngStream) -> PairedComparison:
    """Evaluate the direct and the even-index moment estimators on shared Haar samples."""
    t, n, i, j = _check_mc_args(taus, k, m, i, j, trials)
    if m % 2:
        raise PreconditionError("m must be even")
    direct, sym = [], []
    for w in _haar_draws(n, trials, rng):
        direct.append(entry_power_samples(t, k, i, j, w) ** m)
        sym.append(symmetrized_samples(t, k, m, i, j, w))
    x, y = np.concatenate(direct), np.concatenate(sym)
    bound = moment_bound(t, k, m, i, j)
    return PairedComparison(_report(x, bound), _report(y, bound),
                            float(np.mean(x - y)), jackknife_se(x - y))


def haar_projection_moment(n: int, p: int) -> float:
    """Exact ``E w_11^p`` for Haar ``W`` in dimension ``n``; zero for odd ``p``."""
    if n < 1:
        raise DomainError("dimension must be positive")
    if p < 0:
        raise DomainError("p must be non-negative")
    if p % 2:
        return 0.0
    if p > 12:
        raise PreconditionError("p must be at most 12")
    out = Fraction(1)
    for r in range(p // 2):
        out *= Fraction(2 * r + 1, n + 2 * r)
    return float(out)


def diagonal_perturbation_scan(taus, i: int, k: int, s_grid, trials: int, rng: RngStream,
                               c: float | None = None) -> ScanResult:
    """Second moment of ``((T(i,s) W)^k T(i,s))_{ii}`` along a grid of ``s``.

    All grid points share the same Haar samples.  Per sample the quantity is a
    polynomial of degree ``2k + 2`` in ``s`` whose top coefficient is
    ``w_ii^{2k}``; when the grid has enough points that coefficient is
    recovered by an exact polynomial fit and reported with its standard error.

    ``c`` sets the threshold ``c n^{-k} tau_i^{2k+2}``; by default a quarter of
    the smallest measured ratio on the grid is used.
    """
    t = check_taus(taus)
    n = t.size
    i = _check_index(i, n)
    s = np.asarray(s_grid, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise DomainError("s_grid must be a non-empty vector")
    tau_i = t[i]
    if not tau_i > 0:
        raise DomainError("tau_i must be positive")
    if np.any(s < tau_i / 2 * (1 - 1e-12)) or np.any(s > tau_i * (1 + 1e-12)):
        raise DomainError("s_grid must lie in [tau_i / 2, tau_i]")
    if trials < MIN_MC_TRIALS:
        raise PreconditionError(f"at least {MIN_MC_TRIALS} trials required")

    parts = []
    for w in _haar_draws(n, trials, rng):
        cols = []
        for sv in s:
            ts = t.copy()
            ts[i] = sv
            cols.append(entry_power_samples(ts, k, i, i, w) ** 2)
        parts.append(np.stack(cols, axis=1))
    values = np.concatenate(parts)

    est = values.mean(axis=0)
    se = np.array([jackknife_se(values[:, g]) for g in range(s.size)])
    unit = n ** (-k) * tau_i ** (2 * k + 2)
    c_measured = float(np.min(est) / unit)
    c_used = c_measured / 4 if c is None else float(c)
    threshold = c_used * unit
    frac = float(np.mean(est > threshold))

    lead = lead_se = None
    degree = 2 * k + 2
    if np.unique(s).size >= degree + 1:
        x = s / tau_i
        vander = np.vander(x, degree + 1)
        coef, *_ = np.linalg.lstsq(vander, values.T, rcond=None)
        per_sample = coef[0] / tau_i ** degree
        lead = float(per_sample.mean())
        lead_se = jackknife_se(per_sample)

    return ScanResult(s, est, se, est / s ** degree, threshold, c_used, c_measured, frac,
                      lead, lead_se, int(values.shape[0]))


def hs_collapse_sum(taus, length: int) -> Fraction | float:
    """``sum_{beta in range(n)^length} prod tau_beta^2`` by explicit enumeration.

    Integer or Fraction inputs give an exact result.
    """
    if length < 0:
        raise DomainError("length must be non-negative")
    if len(taus) ** length > MAX_PATH_TERMS:
        raise CapacityError("enumeration guard exceeded")
    total = 0
    for beta in itertools.product(range(len(taus)), repeat=length):
        term = 1
        for b in beta:
            term *= taus[b] ** 2
        total += term
    return total


def check_pairing_identity(n: int, length: int, taus: Sequence[int]) -> int:
    """Count vectors violating ``prod tau_alpha == prod tau_{F(alpha)}^2`` in exact integers."""
    failures = 0
    for alpha in iter_even_multisets(n, length):
        lhs = math.prod(taus[a] for a in alpha)
        rhs = math.prod(taus[b] ** 2 for b in pairing_map(alpha))
        failures += lhs != rhs
    return failures

