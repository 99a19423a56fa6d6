import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lrbs.lattice import disperse, dispersed_means, make_competition_kernel, make_dispersal_kernel
from lrbs.rng import RngKeyStream
from lrbs.stochastic import (
    CoupledState,
    RunRecord,
    TwoSpeciesParams,
    coupled_step,
    default_block_length,
    occupation_frequency,
    run_coupled,
    run_trajectory,
    stochastic_step,
    two_species_step,
)

from conftest import LAZY1, LAZY2, model


def chi2_two_sample(x, y, min_count=20):
    """Two-sample chi-square on pooled integer bins, merging sparse tails."""
    hi = max(x.max(), y.max())
    cx = np.bincount(x, minlength=hi + 1)
    cy = np.bincount(y, minlength=hi + 1)
    bins_x, bins_y, ax, ay = [], [], 0, 0
    for u, v in zip(cx, cy):
        ax, ay = ax + u, ay + v
        if ax + ay >= min_count:
            bins_x.append(ax)
            bins_y.append(ay)
            ax = ay = 0
    if ax + ay:
        bins_x[-1] += ax
        bins_y[-1] += ay
    return stats.chi2_contingency(np.array([bins_x, bins_y]))[1]


# --- single steps -----------------------------------------------------------------


def test_zero_is_absorbing():
    par = model(d=2, extent=(8, 8))
    rng = RngKeyStream(0)
    for t in range(50):
        assert not stochastic_step(np.zeros((8, 8), dtype=np.int64), par, rng, t).any()


def test_overcrowded_isolated_site_contributes_nothing():
    par = model(extent=(16,))
    z = np.zeros(16, dtype=np.int64)
    z[8] = 200
    rng = RngKeyStream(1)
    for t in range(20):
        assert not stochastic_step(z, par, rng, t).any()


def test_mean_at_fixed_point_clt_band():
    par = model(extent=(16,))
    mb = par.m_bar
    z = np.full(16, mb)
    base = RngKeyStream(2)
    n = 10_000
    acc = np.zeros(16)
    for r in range(n):
        acc += stochastic_step(z, par, base.for_replica(r), 0)
    band = 3 * np.sqrt(mb / n)
    assert np.all(np.abs(acc / n - mb) <= band)


def test_domination_by_branching_bound():
    par = model(lam={0: 0.01, 1: 0.002, -1: 0.002}, extent=(16,))
    z = np.random.default_rng(0).integers(0, 150, size=16)
    F = dispersed_means(z.astype(float), par)
    branching = par.m * disperse(z.astype(float), par.p)
    assert np.all(F <= branching + 1e-9)
    base = RngKeyStream(3)
    n = 10_000
    acc = np.zeros(16)
    for r in range(n):
        acc += stochastic_step(z, par, base.for_replica(r), 0)
    se = np.sqrt(np.maximum(F, 1e-9) / n)
    assert np.all(acc / n <= branching + 4 * se)
    assert np.all(np.abs(acc / n - F) <= 4 * se + 1e-12)


@settings(max_examples=25)
@given(st.integers(0, 2**32), st.integers(-11, 11), st.integers(-11, 11), st.integers(0, 100))
def test_shift_equivariance(seed, a, b, t):
    par = model(d=2, extent=(11, 11))
    z = np.random.default_rng(seed).integers(0, 120, size=(11, 11))
    rng = RngKeyStream(seed)
    out = stochastic_step(z, par, rng, t)
    shifted = stochastic_step(np.roll(z, (a, b), axis=(0, 1)), par, rng, t, key_shift=(a, b))
    assert np.array_equal(np.roll(out, (a, b), axis=(0, 1)), shifted)


# --- coupling -------------------------------------------------------------------------


STATES = [
    ([10, 0, 30], [20, 5, 0]),
    ([100, 100, 100], [90, 120, 80]),
    ([3, 0, 0], [0, 0, 7]),
]


@pytest.mark.parametrize("s1,s2", STATES)
def test_coupled_marginals_match_direct_chain(s1, s2):
    reps = 100_000
    par = model(extent=(3 * reps,))
    x1 = np.tile(np.array(s1, dtype=np.int64), reps)
    x2 = np.tile(np.array(s2, dtype=np.int64), reps)
    new = coupled_step(CoupledState(x1, x2, 0), par, RngKeyStream(7))
    d1 = stochastic_step(x1, par, RngKeyStream(8), 0)
    d2 = stochastic_step(x2, par, RngKeyStream(9), 0)
    for phase in range(3):
        assert chi2_two_sample(new.xi1[phase::3], d1[phase::3]) > 0.001
        assert chi2_two_sample(new.xi2[phase::3], d2[phase::3]) > 0.001


def test_coupled_means_five_and_three():
    reps = 100_000
    par = model(m=2.0, lam={0: 0.01}, extent=(reps,))
    # constant fields whose dispersed means are exactly 5 and 3
    a = (2 - np.sqrt(4 - 4 * 0.01 * 5)) / (2 * 0.01)
    b = (2 - np.sqrt(4 - 4 * 0.01 * 3)) / (2 * 0.01)
    st_ = CoupledState(np.full(reps, a), np.full(reps, b), 0)
    assert dispersed_means(st_.xi1, par)[0] == pytest.approx(5)
    new = coupled_step(st_, par, RngKeyStream(1))
    direct = RngKeyStream(2).poisson_array(np.full(reps, 5.0), 0, 0, np.arange(reps, dtype=np.uint64))
    assert chi2_two_sample(new.xi1, direct) > 0.001
    direct3 = RngKeyStream(3).poisson_array(np.full(reps, 3.0), 0, 0, np.arange(reps, dtype=np.uint64))
    assert chi2_two_sample(new.xi2, direct3) > 0.001
    assert np.all(new.xi1 >= new.xi2)


def test_equal_fields_share_the_draw():
    par = model(d=2, extent=(8, 8))
    z = np.random.default_rng(0).integers(0, 150, size=(8, 8))
    new = coupled_step(CoupledState(z, z.copy(), 4), par, RngKeyStream(5))
    assert np.array_equal(new.xi1, new.xi2)
    assert np.array_equal(new.xi1, stochastic_step(z, par, RngKeyStream(5), 4))
    assert new.time == 5


def test_agreement_absorption_10k_trials():
    par = model(d=2, extent=(8, 8), lam={(0, 0): 0.01, (1, 0): 0.001})
    gen = np.random.default_rng(1)
    rng = RngKeyStream(6)
    trials = 0
    for r in range(100):
        z = gen.integers(0, 200, size=(8, 8))
        s = CoupledState(z, z.copy(), 0)
        sub = rng.for_replica(r)
        for _ in range(100):
            s = coupled_step(s, par, sub)
            assert np.array_equal(s.xi1, s.xi2)
            trials += 1
    assert trials == 10_000


def test_shape_mismatch():
    with pytest.raises(ValueError):
        CoupledState(np.zeros(4), np.zeros(5))


# --- two species ----------------------------------------------------------------


def two_params(cross=None, extent=(16,)):
    p = make_dispersal_kernel(1, LAZY1)
    lam = make_competition_kernel(1, {0: 0.01})
    ck = None if cross is None else make_competition_kernel(1, {0: cross})
    return TwoSpeciesParams(2.0, 2.0, p, p, lam, ck, ck, lam, extent)


def test_two_species_reduction():
    tp = two_params(cross=0.002)
    z = np.random.default_rng(0).integers(0, 150, size=16)
    rng = RngKeyStream(4)
    a, b = two_species_step(z, np.zeros(16, dtype=np.int64), tp, rng, 3)
    assert np.array_equal(a, stochastic_step(z, tp.species(1), rng, 3))
    assert not b.any()


def test_two_species_without_cross_are_independent_models():
    tp = two_params()
    g = np.random.default_rng(1)
    z1, z2 = g.integers(0, 150, size=16), g.integers(0, 150, size=16)
    rng = RngKeyStream(4)
    a, b = two_species_step(z1, z2, tp, rng, 0)
    assert np.array_equal(a, stochastic_step(z1, tp.species(1), rng, 0, stream=0))
    assert np.array_equal(b, stochastic_step(z2, tp.species(2), rng, 0, stream=1))


def test_two_species_exchangeable():
    tp = two_params(cross=0.002)
    z = np.full(16, 60, dtype=np.int64)
    base = RngKeyStream(5)
    m1, m2, differ = [], [], 0
    for r in range(400):
        rng = base.for_replica(r)
        a, b = z, z
        for t in range(5):
            a, b = two_species_step(a, b, tp, rng, t)
        m1.append(a.sum())
        m2.append(b.sum())
        differ += not np.array_equal(a, b)
    assert differ > 390
    assert stats.ks_2samp(m1, m2).pvalue > 0.001


# --- trajectories ---------------------------------------------------------------


def test_steps_zero_records_initial_state():
    par = model()
    z = np.full(16, 100)
    rec = run_trajectory(z, par, 0, RngKeyStream(0))
    assert len(rec) == 1 and rec.times == [0] and rec.total_mass == [1600.0]
    assert rec.origin == [1]
    with pytest.raises(ValueError):
        run_trajectory(z, par, -1, RngKeyStream(0))


def test_subcritical_goes_extinct():
    par = model(m=0.9)
    z = np.zeros(16, dtype=np.int64)
    z[8] = 10
    for s in range(10):
        rec = run_trajectory(z, par, 500, RngKeyStream(s))
        assert rec.extinct_at is not None and rec.extinct_at < 500
        assert len(rec) == rec.extinct_at + 1


def test_no_early_stop_runs_all_steps():
    rec = run_trajectory(np.zeros(16), model(), 7, RngKeyStream(0), early_stop=False)
    assert len(rec) == 8 and rec.extinct_at == 0


def test_hooks_snapshots_and_draws():
    par = model()
    seen = []
    rec = run_trajectory(np.full(16, 100), par, 5, RngKeyStream(1), hooks=[lambda t, z: seen.append(t)],
                         record_draws=True, snapshot_steps=[0, 3])
    assert seen == [0, 1, 2, 3, 4, 5]
    assert sorted(rec.snapshots) == [0, 3]
    assert len(rec.draws) == 5
    assert np.array_equal(rec.draws[-1][1], rec.final)
    assert list(rec.rows())[2]["time"] == 2


def test_trajectory_matches_manual_steps():
    par = model(d=2, extent=(8, 8))
    z = np.full((8, 8), 100)
    rng = RngKeyStream(9)
    rec = run_trajectory(z, par, 4, rng)
    for t in range(4):
        z = stochastic_step(z, par, rng, t)
    assert np.array_equal(rec.final, z)


def test_occupation_frequency_examples():
    assert occupation_frequency(RunRecord(origin=[1, 0, 0, 0])) == 0.0
    assert occupation_frequency(RunRecord(origin=[1, 1, 1])) == 1.0
    assert occupation_frequency(RunRecord(origin=[0, 1, 0, 1, 1])) == 0.75
    with pytest.raises(ValueError):
        occupation_frequency(RunRecord())


def test_occupied_count_uses_occupancy():
    par = model()
    rec = run_trajectory(np.full(16, 100), par, 0, RngKeyStream(0))
    assert rec.occupied == [16]
    rec = run_trajectory(np.full(16, 100), par, 0, RngKeyStream(0), occ=None)
    assert rec.occupied == [0]


# --- coupled runs ---------------------------------------------------------------


def test_block_length():
    par = model(lam={0: 0.01})
    assert default_block_length(par) == 104
    par = model(lam={0: 0.005})
    assert default_block_length(par) == 204


def test_identical_starts_T_zero():
    par = model(d=2, extent=(8, 8))
    z = np.full((8, 8), 100)
    rec, T = run_coupled(z, z, par, 20, rng=RngKeyStream(0))
    assert T == 0 and set(rec.agreement) == {1.0}
    assert len(rec) == 21


def test_disagreeing_at_end_gives_none():
    par = model()
    rec, T = run_coupled(np.full(16, 100), np.full(16, 50), par, 0, rng=RngKeyStream(0))
    assert T is None and rec.agreement == [0.0]
    with pytest.raises(ValueError):
        run_coupled(np.zeros(16), np.zeros(16), par, 1)


def test_agreement_monotone_after_full_coincidence():
    par = model(lam={0: 0.05}, extent=(16,))
    hits = 0
    for s in range(20):
        z1 = np.full(16, 20)
        z2 = np.full(16, 21)
        rec, T = run_coupled(z1, z2, par, 300, rng=RngKeyStream(s))
        full = [i for i, a in enumerate(rec.agreement) if a == 1.0]
        if full:
            hits += 1
            assert all(a == 1.0 for a in rec.agreement[full[0]:])
            assert T == full[0]
    assert hits >= 10


def test_coupled_diagnostics_columns():
    par = model(lam={0: 0.05}, extent=(16,))
    mb = int(par.m_bar)
    rec, _ = run_coupled(np.full(16, mb), np.full(16, mb), par, 3, window=2, rng=RngKeyStream(0))
    rows = list(rec.rows())
    assert {"eq_AN", "in_I_A4N", "in_J_A7N", "agreement"} <= rows[0].keys()
    assert rows[0]["eq_AN"] == 1
