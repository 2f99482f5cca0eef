import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from rmtlab.errors import ConfigError, InvalidDimensionError, InvalidInputError
from rmtlab.matrices import (
    EntryDistribution,
    condition_number,
    haar_batch,
    sample_gaussian_matrix,
    sample_haar_orthogonal,
    sample_iid_matrix,
    svd,
)
from rmtlab.moments import haar_projection_moment
from rmtlab.power import factored_hs_batch
from rmtlab.rng import derive_stream, map_blocks


def test_stream_is_deterministic():
    a = derive_stream(42, 0).standard_normal(1000)
    b = derive_stream(42, 0).standard_normal(1000)
    assert a.tobytes() == b.tobytes()


def test_distinct_streams_uncorrelated():
    a = derive_stream(42, 0).standard_normal(100_000)
    b = derive_stream(42, 1).standard_normal(100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


def test_stream_replay_after_config_roundtrip():
    params = pickle.loads(pickle.dumps({"seed": 7, "stream_id": 3}))
    a = derive_stream(7, 3).standard_normal(50)
    b = derive_stream(params["seed"], params["stream_id"]).standard_normal(50)
    assert np.array_equal(a, b)


def test_map_blocks_independent_of_workers(monkeypatch):
    def fn(rng, size):
        return rng.standard_normal(size)

    monkeypatch.setenv("RMT_WORKERS", "1")
    one = np.concatenate(map_blocks(fn, 5000, 9, block_size=700))
    monkeypatch.setenv("RMT_WORKERS", "4")
    four = np.concatenate(map_blocks(fn, 5000, 9, block_size=700))
    assert one.tobytes() == four.tobytes()


def test_gaussian_entry_moments():
    draws = derive_stream(1, 5).standard_normal(1_000_000)
    # successive 1x1 draws consume the stream like the flat draw above
    rng = derive_stream(1, 5)
    first = [sample_gaussian_matrix(1, rng)[0, 0] for _ in range(10)]
    assert np.array_equal(first, draws[:10])
    assert abs(draws.mean()) < 0.005
    assert abs(draws.var() - 1) < 0.01


def test_gaussian_hs_norm_mean():
    rng = derive_stream(2, 0)
    hs2 = [np.sum(sample_gaussian_matrix(10, rng) ** 2) for _ in range(10_000)]
    assert abs(np.mean(hs2) - 100) < 1.0


def test_gaussian_matrix_row_major_and_deterministic():
    g1 = sample_gaussian_matrix(3, derive_stream(5, 5))
    g2 = sample_gaussian_matrix(3, derive_stream(5, 5))
    flat = derive_stream(5, 5).standard_normal(9)
    assert np.array_equal(g1, g2)
    assert np.array_equal(g1.ravel(), flat)


def test_zero_dimension_rejected():
    with pytest.raises(InvalidDimensionError):
        sample_gaussian_matrix(0, derive_stream(0, 0))
    with pytest.raises(InvalidDimensionError):
        sample_haar_orthogonal(0, derive_stream(0, 0))


def test_haar_orthogonal():
    w = haar_batch(7, 200, derive_stream(3, 0))
    err = np.abs(np.swapaxes(w, -1, -2) @ w - np.eye(7)).max()
    assert err <= 1e-12


def test_haar_w11_second_moment():
    w = haar_batch(5, 100_000, derive_stream(4, 0))
    x = w[:, 0, 0] ** 2
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - 1 / 5) <= 3 * se


def test_haar_w11_fourth_moment_n2():
    # oracle: w11^2 ~ Beta(1/2, (n-1)/2)
    oracle = stats.beta(0.5, 0.5).moment(2)
    assert oracle == pytest.approx(3 / 8)
    w = haar_batch(2, 1_000_000, derive_stream(4, 1))
    x = w[:, 0, 0] ** 4
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - oracle) <= 3 * se


@pytest.mark.parametrize("n", [2, 5, 10])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_haar_even_moments_match_beta_oracle(n, k):
    oracle = stats.beta(0.5, (n - 1) / 2).moment(k)
    assert haar_projection_moment(n, 2 * k) == pytest.approx(oracle, rel=1e-12)
    w = haar_batch(n, 100_000, derive_stream(11, 100 * n + k))
    x = w[:, 0, 0] ** (2 * k)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - oracle) <= 3 * se


def test_haar_left_invariance_ks():
    rng = derive_stream(6, 0)
    r = sample_haar_orthogonal(4, derive_stream(6, 99))
    w = haar_batch(4, 100_000, rng)
    rw = r @ w
    w2 = haar_batch(4, 100_000, derive_stream(6, 1))
    assert stats.ks_2samp(rw[:, 0, 0], w2[:, 0, 0]).pvalue > 0.01


def test_gaussian_rotation_invariance_smin_ks():
    n = 8
    g = derive_stream(8, 0).standard_normal((100_000, n, n))
    w = haar_batch(n, 100_000, derive_stream(8, 1))
    g2 = derive_stream(8, 2).standard_normal((100_000, n, n))
    s_wg = np.linalg.svd(w @ g, compute_uv=False)[:, -1]
    s_g = np.linalg.svd(g2, compute_uv=False)[:, -1]
    assert stats.ks_2samp(s_wg, s_g).pvalue > 0.01


def test_iid_distributions():
    rad = sample_iid_matrix(3, "rademacher", derive_stream(1, 1))
    assert set(np.unique(rad)) <= {-1.0, 1.0}
    u = derive_stream(1, 2)
    from rmtlab.matrices import iid_batch

    x = iid_batch(1000, 1, EntryDistribution.UNIFORM_UNIT_VARIANCE, u).ravel()
    assert abs(x.var() - 1) < 0.01
    assert np.all(np.abs(x) <= math.sqrt(3))
    a = sample_iid_matrix(6, "gaussian", derive_stream(3, 3))
    b = sample_gaussian_matrix(6, derive_stream(3, 3))
    assert np.array_equal(a, b)
    with pytest.raises(ConfigError):
        sample_iid_matrix(3, "cauchy", derive_stream(1, 1))


def test_svd_examples():
    assert np.allclose(svd(np.eye(3)).sigma, [1, 1, 1])
    f = svd(np.diag([3.0, -4.0]))
    assert np.allclose(f.sigma, [4, 3])
    a = sample_gaussian_matrix(20, derive_stream(12, 0))
    f = svd(a)
    assert np.abs(f.reconstruct() - a).max() <= 1e-10 * (1 + np.abs(a).max())
    assert np.abs(f.u.T @ f.u - np.eye(20)).max() <= 1e-12
    assert np.abs(f.v.T @ f.v - np.eye(20)).max() <= 1e-12
    assert np.all(np.diff(f.sigma) <= 0)


def test_svd_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-1e3, 1e3)))
def test_svd_contract_property(a):
    f = svd(a)
    assert np.all(np.diff(f.sigma) <= 0) and np.all(f.sigma >= 0)
    assert np.abs(f.reconstruct() - a).max() <= 1e-10 * (1 + np.abs(a).max())
    # svd of the reconstruction keeps sigma
    f2 = svd(f.reconstruct())
    assert np.allclose(f2.sigma, f.sigma, rtol=1e-10, atol=1e-10 * (1 + f.sigma[0]))


def test_condition_number():
    w = sample_haar_orthogonal(6, derive_stream(1, 0))
    assert condition_number(w) == pytest.approx(1.0, abs=1e-12)
    assert condition_number(np.diag([2.0, 0.5])) == pytest.approx(4.0)
    assert condition_number([[1.0, 0.0], [0.0, 0.0]]) == math.inf


def test_factored_hs_batch_matches_loop():
    from rmtlab.power import factored_inverse_power

    s = np.sort(np.abs(derive_stream(1, 9).standard_normal((4, 5))), axis=1)[:, ::-1] + 0.1
    q = haar_batch(5, 4, derive_stream(1, 10))
    for k in (1, 2, 3):
        got = factored_hs_batch(s, q, k)
        want = [np.linalg.norm(factored_inverse_power(s[b], q[b], k)) for b in range(4)]
        assert np.allclose(got, want, rtol=1e-12)
