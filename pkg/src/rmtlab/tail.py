"""Monte Carlo tail probabilities for powers of random matrices.

Every trial draws one matrix and evaluates all thresholds of a grid on it
(common random numbers), so estimated curves are exactly monotone in ``t``.
Trials are organised in blocks; block ``b`` uses ``derive_stream(seed, b)``.

Event conventions, with ``n`` the dimension and ``k`` the power:

* small ball:  ``s_min(G^k) <= t^k / sqrt(n)``,  ``t <= 1``
* upper tail:  ``||G^{-k}|| >= t^k sqrt(n)``,    ``t >= 1`` (HS or spectral)
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .density import TailConstants
from .errors import ConfigError, InsufficientDataError, PreconditionError
from .matrices import EntryDistribution, check_dimension, haar_batch, iid_batch
from .power import SINGULAR_FLOOR, factored_hs_batch, inverse_power_stats
from .rng import RngStream, map_blocks

CONFIDENCE = 0.99
MIN_EVENTS = 50
MIN_TRIALS = 1000


class Statistic(str, enum.Enum):
    SMIN_POWER = "smin_power"
    HS_INVERSE_POWER = "hs_inverse_power"
    SPEC_INVERSE_POWER = "spec_inverse_power"
    HS_INVERSE = "hs_inverse"


class Direction(str, enum.Enum):
    LOWER_SMALLBALL = "lower_smallball"
    UPPER_TAIL = "upper_tail"


def _parse(enum_cls, value):
    try:
        return enum_cls(value)
    except ValueError:
        raise ConfigError(f"unknown {enum_cls.__name__.lower()} {value!r}") from None


def wilson_interval(successes, trials, confidence: float = CONFIDENCE):
    """Wilson score interval, vectorised over ``successes``."""
    x = np.asarray(successes, dtype=np.float64)
    n = float(trials)
    z = stats.norm.ppf(0.5 + confidence / 2)
    p = x / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z / denom * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    # rounding can push an endpoint past p at p = 0 or 1
    lo = np.minimum(np.clip(center - half, 0.0, 1.0), p)
    hi = np.maximum(np.clip(center + half, 0.0, 1.0), p)
    return lo, hi


@dataclass
class TailCurve:
    statistic: Statistic
    direction: Direction
    n: int
    k: int
    entry_dist: EntryDistribution
    t_grid: np.ndarray
    p_hat: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    trials: int
    seed: int
    discarded: int = 0
    route: str = "direct"

    @property
    def events(self) -> np.ndarray:
        return np.rint(self.p_hat * self.trials).astype(np.int64)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    points_used: int


@dataclass
class PowerSamples:
    """Per-trial statistics of ``G^k`` for several powers, ``nan`` marks discarded trials."""

    n: int
    ks: tuple[int, ...]
    seed: int
    entry_dist: EntryDistribution
    route: str
    spec_inv: dict[int, np.ndarray] = field(default_factory=dict)
    hs_inv: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return next(iter(self.hs_inv.values())).size

    def discarded(self, k: int) -> int:
        return int(np.count_nonzero(np.isnan(self.hs_inv[k])))

    def values(self, statistic: Statistic, k: int) -> np.ndarray:
        if statistic is Statistic.SMIN_POWER:
            with np.errstate(divide="ignore"):
                return 1.0 / self.spec_inv[k]
        if statistic is Statistic.SPEC_INVERSE_POWER:
            return self.spec_inv[k]
        if statistic is Statistic.HS_INVERSE:
            return self.hs_inv[1]
        return self.hs_inv[k]


def _direct_block(n, ks, dist):
    kmax = max(ks)

    def run(rng: RngStream, size: int):
        g = iid_batch(n, size, dist, rng)
        out = {}
        if kmax == 1:
            s = np.linalg.svd(g, compute_uv=False)
            out[1] = inverse_power_stats(None, s, None, 1)
            return out
        u, s, vt = np.linalg.svd(g)
        for k in ks:
            out[k] = inverse_power_stats(u, s, vt, k)
        return out

    return run


def _factored_block(n, ks, dist):
    def run(rng: RngStream, size: int):
        g = iid_batch(n, size, dist, rng)
        q = haar_batch(n, size, rng)
        s = np.linalg.svd(g, compute_uv=False)
        singular = ~(s[:, -1] > SINGULAR_FLOOR)
        s = np.where(singular[:, None], 1.0, s)
        out = {}
        for k in ks:
            hs = factored_hs_batch(s, q, k)
            spec = _factored_spec(s, q, k)
            out[k] = (np.where(singular, np.nan, spec), np.where(singular, np.nan, hs))
        return out

    return run


def _factored_spec(s: np.ndarray, q: np.ndarray, k: int) -> np.ndarray:
    smin = s[:, -1:]
    rel = smin / s
    if k == 1:
        return 1.0 / smin[:, 0]
    step = rel[:, :, None] * q
    p = step
    for _ in range(k - 2):
        p = p @ step
    p = p * rel[:, None, :]
    top = np.linalg.svd(p, compute_uv=False)[:, 0]
    return np.exp(-k * np.log(smin[:, 0]) + np.log(top))


def sample_power_statistics(n: int, ks, trials: int, seed: int,
                            entry_dist=EntryDistribution.GAUSSIAN,
                            route: str = "direct") -> PowerSamples:
    """Spectral and HS norms of ``G^{-k}`` for every ``k`` in ``ks``, one matrix per trial.

    ``route="factored"`` replaces ``G^{-k}`` by ``(S^{-1} Q)^{k-1} S^{-1}`` with
    ``S`` the singular values of the sampled matrix and ``Q`` an independent
    Haar matrix.
    """
    n = check_dimension(n)
    dist = EntryDistribution.parse(entry_dist)
    ks = tuple(sorted({int(k) for k in ks} | {1}))
    if ks[0] < 1:
        raise ConfigError("powers must be positive")
    if route == "direct":
        block = _direct_block(n, ks, dist)
    elif route == "factored":
        block = _factored_block(n, ks, dist)
    else:
        raise ConfigError(f"unknown route {route!r}")
    parts = map_blocks(block, trials, seed)
    out = PowerSamples(n, ks, int(seed), dist, route)
    for k in ks:
        out.spec_inv[k] = np.concatenate([p[k][0] for p in parts])
        out.hs_inv[k] = np.concatenate([p[k][1] for p in parts])
    return out


def _check_grid(direction: Direction, t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size == 0 or np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise ConfigError("t_grid must be a non-empty vector of positive numbers")
    if np.any(np.diff(t) <= 0):
        raise ConfigError("t_grid must be sorted increasing")
    if direction is Direction.LOWER_SMALLBALL and np.any(t > 1):
        raise ConfigError("small-ball grids need t <= 1")
    if direction is Direction.UPPER_TAIL and np.any(t < 1):
        raise ConfigError("upper-tail grids need t >= 1")
    return t


def _check_pairing(statistic: Statistic, direction: Direction):
    want = Direction.LOWER_SMALLBALL if statistic is Statistic.SMIN_POWER else Direction.UPPER_TAIL
    if direction is not want:
        raise ConfigError(f"statistic {statistic.value} requires direction {want.value}")


def tail_curve(samples: PowerSamples, statistic, direction, k: int, t_grid) -> TailCurve:
    """Build a tail curve from precomputed per-trial statistics."""
    statistic = _parse(Statistic, statistic)
    direction = _parse(Direction, direction)
    _check_pairing(statistic, direction)
    t = _check_grid(direction, t_grid)
    if statistic is Statistic.HS_INVERSE:
        k = 1
    if k not in samples.ks:
        raise ConfigError(f"power {k} was not sampled")
    vals = samples.values(statistic, k)
    vals = vals[~np.isnan(vals)]
    trials = vals.size
    n = samples.n
    if direction is Direction.LOWER_SMALLBALL:
        thresholds = t ** k / math.sqrt(n)
        events = np.array([np.count_nonzero(vals <= th) for th in thresholds])
    else:
        thresholds = t ** k * math.sqrt(n)
        events = np.array([np.count_nonzero(vals >= th) for th in thresholds])
    lo, hi = wilson_interval(events, trials)
    p = events / trials
    return TailCurve(statistic, direction, n, k, samples.entry_dist, t, p, lo, hi, trials, samples.seed,
                     samples.trials - trials, samples.route)


def estimate_tail_probability(statistic, direction, n: int, k: int, entry_dist, t_grid,
                              trials: int, seed: int, route: str = "direct") -> TailCurve:
    statistic = _parse(Statistic, statistic)
    direction = _parse(Direction, direction)
    _check_pairing(statistic, direction)
    _check_grid(direction, t_grid)
    if trials < MIN_TRIALS:
        raise ConfigError(f"at least {MIN_TRIALS} trials required")
    if statistic is Statistic.HS_INVERSE:
        k = 1
    samples = sample_power_statistics(n, [k], trials, seed, entry_dist, route)
    return tail_curve(samples, statistic, direction, k, t_grid)


def fit_log_slope(curve: TailCurve) -> SlopeFit:
    """Weighted least squares of ``log p`` on ``log t``.

    Only grid points with at least ``MIN_EVENTS`` events enter.  Each point is
    weighted by the inverse squared half-width of its confidence interval in
    log space; the slope error treats those half-widths as ``z`` standard
    deviations.
    """
    p = np.asarray(curve.p_hat, dtype=np.float64)
    usable = (p * curve.trials >= MIN_EVENTS) & (p > 0)
    if np.count_nonzero(usable) < 3:
        raise InsufficientDataError("need at least 3 grid points with enough events")
    x = np.log(np.asarray(curve.t_grid, dtype=np.float64)[usable])
    y = np.log(p[usable])
    lo = np.maximum(np.asarray(curve.ci_low)[usable], np.finfo(float).tiny)
    hi = np.asarray(curve.ci_high)[usable]
    half = 0.5 * (np.log(hi) - np.log(lo))
    half = np.where(half > 0, half, np.min(half[half > 0]) if np.any(half > 0) else 1.0)
    z = stats.norm.ppf(0.5 + CONFIDENCE / 2)
    w = 1.0 / half ** 2
    design = np.column_stack([np.ones_like(x), x])
    xtwx = design.T @ (w[:, None] * design)
    coef = np.linalg.solve(xtwx, design.T @ (w * y))
    cov = np.linalg.inv(xtwx) * (1.0 / z) ** 2
    resid = y - design @ coef
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    r2 = 1.0 - np.sum(w * resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(coef[1]), float(coef[0]), float(math.sqrt(cov[1, 1])), float(r2),
                    int(np.count_nonzero(usable)))


@dataclass(frozen=True)
class HsComparison:
    ratios: np.ndarray
    discarded: int
    outer_trials: int
    inner_trials: int

    @property
    def discard_rate(self) -> float:
        return self.discarded / self.outer_trials if self.outer_trials else 0.0


def hs_comparison_ratio(n: int, k: int, outer_trials: int, inner_trials: int, seed: int) -> HsComparison:
    """Ratio of ``E_Q ||(S^{-1} Q)^{k-1} S^{-1}||_HS^2`` to ``n^{1-k} ||G^{-1}||_HS^{2k}``.

    One Gaussian ``G`` per outer trial (stream ``outer index``); the average
    over ``Q`` uses ``inner_trials`` Haar samples drawn from the same stream.
    Both sides are computed from ``s_min / sigma``, so the scale cancels and
    ``k = 1`` gives exactly one.
    """
    n = check_dimension(n)
    if k < 1:
        raise ConfigError("power must be positive")
    if inner_trials < MIN_TRIALS:
        raise PreconditionError(f"at least {MIN_TRIALS} inner trials required")

    def one(rng: RngStream, _size: int):
        g = rng.standard_normal((n, n))
        s = np.linalg.svd(g, compute_uv=False)
        if not s[-1] > SINGULAR_FLOOR:
            return math.nan
        rel = s[-1] / s
        base = float(np.sum(rel * rel))
        if k == 1:
            return 1.0
        step = rel[:, None] * haar_batch(n, inner_trials, rng)
        p = step
        for _ in range(k - 2):
            p = p @ step
        p = p * rel[None, None, :]
        sq = np.sum(p * p, axis=(-2, -1))
        return float(np.mean(sq) / (n ** (1 - k) * base ** k))

    ratios = np.array(map_blocks(one, outer_trials, seed, block_size=1))
    kept = ratios[~np.isnan(ratios)]
    return HsComparison(kept, int(ratios.size - kept.size), outer_trials, inner_trials)


def calibrate_tail_constants(n: int = 50, trials: int = 100_000, seed: int = 0,
                             smallball_grid=(0.125, 0.25, 0.5, 1.0),
                             upper_grid=(1.0, 2.0, 4.0, 8.0)) -> TailConstants:
    """Measure the two big-theta constants used by the density helpers.

    ``c_szarek`` is the worst two-sided ratio between the small-ball
    probability of ``s_min(G)`` and ``t``; ``c_hs`` is the largest
    ``t * P{||G^{-1}||_HS >= t sqrt(n)}``.  Both are floored at one.
    """
    samples = sample_power_statistics(n, [1], trials, seed)
    small = tail_curve(samples, Statistic.SMIN_POWER, Direction.LOWER_SMALLBALL, 1, smallball_grid)
    upper = tail_curve(samples, Statistic.HS_INVERSE, Direction.UPPER_TAIL, 1, upper_grid)
    with np.errstate(divide="ignore"):
        ratio = small.p_hat / small.t_grid
        c_sz = float(np.max(np.maximum(ratio, 1.0 / ratio)))
    c_hs = float(np.max(upper.p_hat * upper.t_grid))
    return TailConstants(max(c_sz, 1.0), max(c_hs, 1.0))
