import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lrbs.rng import RngKeyStream, key_poisson, replica_seed, site_base, splitmix

MASK = (1 << 64) - 1


def sm_ref(z):
    z = (z + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def uniform_ref(seed, stream, t, site, k):
    h = sm_ref(sm_ref(sm_ref(sm_ref(sm_ref(seed) ^ stream) ^ t) ^ site) ^ k)
    return ((h >> 11) + 0.5) * 2.0**-53


def test_splitmix_reference_vector():
    # first output of the reference splitmix64 generator seeded with 0
    assert int(splitmix(np.uint64(0))) == 0xE220A8397B1DCDAF


@given(st.integers(0, MASK))
def test_splitmix_matches_python_reference(z):
    assert int(splitmix(np.uint64(z))) == sm_ref(z)


@given(st.integers(0, MASK), st.integers(0, 2), st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 5))
@settings(max_examples=50)
def test_uniform_matches_documented_mixing(seed, stream, t, site, k):
    assert RngKeyStream(seed).uniform(stream, t, site, k) == uniform_ref(seed, stream, t, site, k)


def test_uniform_in_open_unit_interval():
    u = RngKeyStream(3).uniform_array(0, 0, np.arange(100_000, dtype=np.uint64))
    assert u.min() > 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.005


def test_poisson_zero_mean_is_zero():
    r = RngKeyStream(1)
    assert all(r.poisson(0.0, 0, t, s) == 0 for t in range(20) for s in range(20))


def test_same_key_same_value():
    r = RngKeyStream(99)
    assert r.poisson(37.5, 1, 4, 11) == r.poisson(37.5, 1, 4, 11)
    assert RngKeyStream(99).poisson(3.2, 0, 0, 0) == r.poisson(3.2, 0, 0, 0)


def test_array_and_scalar_agree():
    r = RngKeyStream(5)
    means = np.linspace(0, 40, 64)
    sites = np.arange(64, dtype=np.uint64)
    arr = r.poisson_array(means, 2, 7, sites)
    assert [r.poisson(m, 2, 7, s) for m, s in zip(means, range(64))] == arr.tolist()


def test_large_seeds_accepted():
    r = RngKeyStream(MASK)
    assert 0 < r.uniform(0, 0, 0) < 1
    assert r.for_replica(3).master_seed == replica_seed(MASK, 3)


@pytest.mark.parametrize("mean", [100.0])
def test_poisson_mean_and_variance(mean):
    x = RngKeyStream(2024).poisson_array(np.full(100_000, mean), 0, 0, np.arange(100_000, dtype=np.uint64))
    assert abs(x.mean() - mean) <= 1.0
    assert abs(x.var() - mean) <= 5.0


@pytest.mark.parametrize("mean", [0.3, 2.5, 9.99, 10.0, 27.0, 400.0])
def test_poisson_goodness_of_fit(mean):
    n = 50_000
    x = RngKeyStream(17).poisson_array(np.full(n, mean), 0, 1, np.arange(n, dtype=np.uint64))
    lo, hi = int(stats.poisson.ppf(1e-4, mean)), int(stats.poisson.ppf(1 - 1e-4, mean))
    edges = np.arange(lo, hi + 2)
    obs = np.array([(x < lo).sum()] + [(x == k).sum() for k in edges[:-1]] + [(x > hi).sum()])
    cdf = stats.poisson.cdf
    exp = np.array([cdf(lo - 1, mean)] + [stats.poisson.pmf(k, mean) for k in edges[:-1]] + [1 - cdf(hi, mean)]) * n
    keep = exp >= 5
    obs_k = np.append(obs[keep], obs[~keep].sum())
    exp_k = np.append(exp[keep], exp[~keep].sum())
    if exp_k[-1] < 5:
        obs_k[-2] += obs_k[-1]
        exp_k[-2] += exp_k[-1]
        obs_k, exp_k = obs_k[:-1], exp_k[:-1]
    chi2 = ((obs_k - exp_k) ** 2 / exp_k).sum()
    assert stats.chi2.sf(chi2, len(obs_k) - 1) > 1e-3


def test_streams_are_distinct():
    r = RngKeyStream(8)
    sites = np.arange(5000, dtype=np.uint64)
    a = r.uniform_array(0, 0, sites)
    b = r.uniform_array(1, 0, sites)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_site_base_depends_on_every_word():
    base = int(site_base(np.uint64(1), 0, 0, 0))
    assert len({base, int(site_base(np.uint64(2), 0, 0, 0)), int(site_base(np.uint64(1), 1, 0, 0)),
                int(site_base(np.uint64(1), 0, 1, 0)), int(site_base(np.uint64(1), 0, 0, 1))}) == 5


def test_key_poisson_deterministic_in_large_mean_branch():
    assert key_poisson(1e4, np.uint64(1), 0, 3, 9) == key_poisson(1e4, np.uint64(1), 0, 3, 9)
