import math

import numpy as np
import pytest
from statsmodels.stats.proportion import proportion_confint

from rmtlab.errors import ConfigError, InsufficientDataError, PreconditionError
from rmtlab.matrices import EntryDistribution
from rmtlab.rng import derive_stream
from rmtlab.tail import (
    Direction,
    Statistic,
    TailCurve,
    estimate_tail_probability,
    fit_log_slope,
    hs_comparison_ratio,
    sample_power_statistics,
    tail_curve,
    wilson_interval,
)


def synthetic_curve(t, p, trials, events=None):
    t = np.asarray(t, dtype=float)
    if events is None:
        events = np.rint(np.asarray(p) * trials)
    lo, hi = wilson_interval(events, trials)
    p_hat = events / trials
    return TailCurve(Statistic.SMIN_POWER, Direction.LOWER_SMALLBALL, 10, 1,
                     EntryDistribution.GAUSSIAN, t, p_hat, lo, hi, trials, 0)


@pytest.mark.parametrize("x,n", [(0, 100), (7, 100), (50, 100), (1000, 1000), (3, 100_000)])
def test_wilson_matches_statsmodels(x, n):
    lo, hi = wilson_interval(x, n)
    ref = proportion_confint(x, n, alpha=0.01, method="wilson")
    assert float(lo) == pytest.approx(ref[0], abs=1e-12)
    assert float(hi) == pytest.approx(ref[1], abs=1e-12)
    assert lo <= x / n <= hi


def test_exact_power_law_slopes():
    # event counts are exact integers here, so the log-log points are collinear
    t = np.array([0.125, 0.25, 0.5, 1.0])
    fit = fit_log_slope(synthetic_curve(t, 0.25 * t, 2 ** 20))
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.points_used == 4
    up = np.array([1.0, 2.0, 4.0, 8.0])
    fit = fit_log_slope(synthetic_curve(up, 0.25 / up, 2 ** 20))
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)


def test_binomial_resampled_slope_within_stderr():
    rng = derive_stream(0, 0).generator
    t = np.geomspace(1 / 64, 1, 7)
    trials = 200_000
    hits = 0
    for _ in range(50):
        events = rng.binomial(trials, 0.3 * t)
        fit = fit_log_slope(synthetic_curve(t, None, trials, events.astype(float)))
        hits += abs(fit.slope - 1.0) <= 3 * fit.stderr
    assert hits >= 48


def test_fit_requires_enough_events():
    t = np.array([0.01, 0.02, 0.04, 0.08])
    with pytest.raises(InsufficientDataError):
        fit_log_slope(synthetic_curve(t, t / 100, 10_000))


def test_grid_and_pairing_rules():
    with pytest.raises(ConfigError):
        estimate_tail_probability("smin_power", "lower_smallball", 4, 1, "gaussian", [0.5, 2.0], 1000, 0)
    with pytest.raises(ConfigError):
        estimate_tail_probability("smin_power", "lower_smallball", 4, 1, "gaussian", [0.5, 0.25], 1000, 0)
    with pytest.raises(ConfigError):
        estimate_tail_probability("smin_power", "upper_tail", 4, 1, "gaussian", [1.0, 2.0], 1000, 0)
    with pytest.raises(ConfigError):
        estimate_tail_probability("hs_inverse_power", "upper_tail", 4, 1, "gaussian", [1.0, 2.0], 10, 0)
    with pytest.raises(ConfigError):
        estimate_tail_probability("bogus", "upper_tail", 4, 1, "gaussian", [1.0], 1000, 0)


def test_saturated_upper_point():
    curve = estimate_tail_probability("hs_inverse_power", "upper_tail", 4, 1, "gaussian",
                                      [1.0, 1e6], 2000, 3)
    # ||G^{-1}||_HS >= 1 / s_min, and s_min is of order n^{-1/2}
    assert curve.p_hat[0] > 0.5
    assert curve.p_hat[1] <= curve.p_hat[0]


def test_deterministic_replay():
    a = estimate_tail_probability("smin_power", "lower_smallball", 6, 2, "gaussian", [0.25, 0.5], 3000, 11)
    b = estimate_tail_probability("smin_power", "lower_smallball", 6, 2, "gaussian", [0.25, 0.5], 3000, 11)
    assert np.array_equal(a.p_hat, b.p_hat)


def test_curves_monotone():
    s = sample_power_statistics(10, [1, 2], 5000, 5)
    small = tail_curve(s, "smin_power", "lower_smallball", 2, np.geomspace(0.05, 1, 12))
    up = tail_curve(s, "hs_inverse_power", "upper_tail", 2, np.geomspace(1, 50, 12))
    assert np.all(np.diff(small.p_hat) >= 0)
    assert np.all(np.diff(up.p_hat) <= 0)
    assert np.all(small.ci_low <= small.p_hat) and np.all(small.p_hat <= small.ci_high)


def test_direct_and_factored_curves_overlap():
    t = [1.0, 2.0, 4.0]
    d = estimate_tail_probability("hs_inverse_power", "upper_tail", 8, 2, "gaussian", t, 20_000, 21)
    f = estimate_tail_probability("hs_inverse_power", "upper_tail", 8, 2, "gaussian", t, 20_000, 22,
                                  route="factored")
    assert np.all(np.maximum(d.ci_low, f.ci_low) <= np.minimum(d.ci_high, f.ci_high))


def test_k1_gaussian_limit_law():
    # P(sqrt(n) s_min <= t) tends to 1 - exp(-t - t^2/2) for Gaussian matrices
    t = np.array([0.125, 0.25, 0.5])
    c = estimate_tail_probability("smin_power", "lower_smallball", 30, 1, "gaussian", t, 20_000, 8)
    law = 1 - np.exp(-t - t * t / 2)
    assert np.all(np.abs(c.p_hat - law) < 0.02)


def test_hs_comparison_k1_exact():
    res = hs_comparison_ratio(8, 1, 5, 1000, 0)
    assert np.all(res.ratios == 1.0)
    assert res.discarded == 0


def test_hs_comparison_positive_finite():
    res = hs_comparison_ratio(16, 3, 3, 1000, 1)
    assert res.ratios.size == 3
    assert np.all(np.isfinite(res.ratios)) and np.all(res.ratios > 0)
    with pytest.raises(PreconditionError):
        hs_comparison_ratio(4, 2, 2, 10, 0)


def test_rademacher_probe_runs():
    c = estimate_tail_probability("smin_power", "lower_smallball", 20, 1, "rademacher",
                                  [0.125, 0.25, 0.5, 1.0], 5000, 4)
    fit = fit_log_slope(c)
    print(f"rademacher n=20 small-ball slope {fit.slope:.3f} +/- {fit.stderr:.3f}")
    assert math.isfinite(fit.slope)
