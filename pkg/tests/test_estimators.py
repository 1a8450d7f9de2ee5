import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import oracles
from hazardcv import estimators as est
from hazardcv.data import GridSample
from hazardcv.estimators import DegeneratePilotError, SideMode
from hazardcv.kernels import Side, epanechnikov, get_kernel, one_sided, sextic

KINDS = ("LL", "MBC", "BO_LL", "BO_MBC")


def random_sample(seed, R=None, zero_share=0.1):
    rng = np.random.default_rng(seed)
    R = R or int(rng.integers(6, 40))
    Y = rng.uniform(0.5, 20.0, R)
    Y[rng.random(R) < zero_share] = 0.0
    O = np.where(Y > 0, rng.poisson(0.3 * Y), 0)
    return GridSample(0.0, 2.0, O, Y, n=int(O.sum() + 50))


def uniform_sample(R=50, y=10.0):
    return GridSample(0.0, 1.0, np.zeros(R, dtype=int), np.full(R, y), n=1000)


# --------------------------------------------------------- stochastic moments
def test_moments_zero_exposure():
    s = GridSample(0.0, 1.0, [0] * 5, [0.0] * 5, n=1)
    assert est.stochastic_moments(s, 0.5, 0.3, epanechnikov()) == (0.0, 0.0, 0.0)


def test_moments_symmetric_window():
    s = uniform_sample(101)
    a0, a1, _ = est.stochastic_moments(s, s.times[50], 0.1, epanechnikov())
    assert abs(a1) <= s.delta * a0
    assert_allclose(a1, 0.0, atol=1e-12)


def test_moments_five_cell_hand_case():
    s = GridSample(0.0, 1.0, [0, 1, 0, 2, 0], [1.0, 2.0, 3.0, 4.0, 5.0], n=10)
    b, t = 2 * s.delta, s.times[2]
    # cells at lags -2d..2d hit u = -1, -0.5, 0, 0.5, 1; K = 0.75 (1 - u^2)
    W = np.array([0.0, 0.5625, 0.75, 0.5625, 0.0]) / b
    d = t - s.times
    Y = s.exposures
    want = [np.sum(W * Y), np.sum(W * d * Y), np.sum(W * d * d * Y)]
    assert_allclose(est.stochastic_moments(s, t, b, epanechnikov()), want, rtol=1e-14, atol=1e-15)
    pilot = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    want_m = [np.sum(W * Y * pilot**2), np.sum(W * d * Y * pilot**2), np.sum(W * d * d * Y * pilot**2)]
    assert_allclose(est.stochastic_moments(s, t, b, epanechnikov(), weighted_by=pilot), want_m, rtol=1e-14, atol=1e-15)


# ----------------------------------------------------------- exact reproduction
def test_ll_zero_occurrences():
    e = est.ll_hazard(uniform_sample(), 0.1, epanechnikov())
    assert np.all(e.values == 0.0)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("hazard", [lambda t: 0.7 + 0 * t, lambda t: 0.2 + 1.3 * t])
def test_ll_reproduces_constant_and_linear(seed, hazard):
    s = random_sample(seed).noiseless(hazard)
    e = est.ll_hazard(s, 5 * s.delta, sextic())
    ok = ~e.undefined
    assert ok.any()
    assert_allclose(e.raw[ok], hazard(s.times[ok]), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("kind", ["MBC", "BO_LL", "BO_MBC"])
@pytest.mark.parametrize("mode", ["exposure", "occurrence"])
def test_constant_hazard_reproduced(kind, mode):
    s = random_sample(11, R=30, zero_share=0).noiseless(lambda t: 0.4 + 0 * t)
    e = est.estimate(s, 4 * s.delta, epanechnikov(), kind, mode)
    ok = ~e.undefined
    assert ok.sum() >= 25
    assert_allclose(e.raw[ok], 0.4, rtol=1e-10)


def test_mbc_zero_occurrences_is_degenerate():
    with pytest.raises(DegeneratePilotError):
        est.mbc_hazard(uniform_sample(), 0.1, epanechnikov())


def test_mbc_closer_than_ll_for_exponential_hazard():
    s = GridSample(0.0, 3.0, np.zeros(150, dtype=int), np.full(150, 50.0), n=5000).noiseless(lambda t: np.exp(-t))
    b = 0.4
    interior = (s.times > b) & (s.times < 3.0 - b)
    truth = np.exp(-s.times[interior])
    err_ll = np.max(np.abs(est.ll_hazard(s, b, epanechnikov()).values[interior] - truth))
    err_mbc = np.max(np.abs(est.mbc_hazard(s, b, epanechnikov()).values[interior] - truth))
    assert err_mbc <= err_ll


# --------------------------------------------------------------- direct oracle
@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("mode", ["exposure", "occurrence"])
def test_fits_match_direct_summation(seed, kind, mode):
    s = random_sample(100 + seed, R=int(6 + seed))
    b = (2.0 + 0.4 * seed) * s.delta
    ref = oracles.fit(kind, s.times, s.occurrences, s.exposures, b, oracles.base_kernel("quartic"), mode)
    if ref is None:
        with pytest.raises(DegeneratePilotError):
            est.estimate(s, b, get_kernel("quartic"), kind, mode)
        return
    e = est.estimate(s, b, get_kernel("quartic"), kind, mode)
    assert e.undefined.tolist() == ref[1].tolist()
    assert_allclose(e.raw, ref[0], rtol=1e-12, atol=1e-13)


def test_mbc_five_cell_case():
    s = GridSample(0.0, 1.0, [1, 3, 0, 2, 4], [2.0, 5.0, 4.0, 6.0, 7.0], n=20)
    ref = oracles.mbc(s.times, s.occurrences.astype(float), s.exposures, 2.5 * s.delta, oracles.base_kernel("epanechnikov"))
    assert_allclose(est.mbc_hazard(s, 2.5 * s.delta, epanechnikov()).raw, ref[0], rtol=1e-13)


def test_bo_mixed_mask_six_cell_case():
    s = GridSample(0.0, 1.2, [1, 0, 2, 1, 0, 1], [9.0, 8.0, 3.0, 5.0, 1.0, 2.0], n=20)
    b = 2 * s.delta
    e = est.bo_ll_hazard(s, b, epanechnikov())
    assert 0 < e.side_mask.sum() < 6
    ref = oracles.fit("BO_LL", s.times, s.occurrences, s.exposures, b, oracles.base_kernel("epanechnikov"))
    assert_allclose(e.raw, ref[0], rtol=1e-13, atol=1e-14)


# ------------------------------------------------------------- side selection
def test_side_select_uniform_interior_ties_right():
    s = uniform_sample()
    assert est.side_select(s, s.times[25], 0.1, SideMode.EXPOSURE) is False


def test_side_select_all_exposure_on_the_left():
    Y = np.where(np.arange(50) < 25, 10.0, 0.0)
    s = GridSample(0.0, 1.0, [0] * 50, Y, n=100)
    assert est.side_select(s, s.times[24], 0.1, "exposure") is True


def test_side_select_near_right_boundary():
    s = uniform_sample()
    assert est.side_select(s, s.times[-2], 0.1, "exposure") is True


@pytest.mark.parametrize("seed", range(10))
def test_side_mask_matches_pointwise_rule(seed):
    s = random_sample(seed)
    for mode in SideMode:
        for b in (s.delta * 1.5, s.delta * 4, 0.5):
            expected = [est.side_select(s, t, b, mode) for t in s.times]
            assert est.side_mask(s, b, mode).tolist() == expected


def test_bo_with_right_mask_equals_right_one_sided():
    rng = np.random.default_rng(5)
    s = GridSample(0.0, 1.0, rng.poisson(2, 60), np.full(60, 10.0), n=1000)
    b = 0.08
    bo = est.bo_ll_hazard(s, b, sextic())
    interior = s.times < 1 - b
    assert not bo.side_mask[interior].any()
    right = est.one_sided_hazard(s, b, sextic(), Side.RIGHT)
    assert_allclose(bo.raw[interior], right.raw[interior], rtol=1e-14)


# ----------------------------------------------------------------- properties
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.2, 8.0), st.sampled_from(["LL", "BO_LL"]))
def test_linear_in_occurrences(seed, width, kind):
    s = random_sample(seed)
    rng = np.random.default_rng(seed + 1)
    o2 = np.where(s.exposures > 0, rng.poisson(1.0, s.R), 0)
    b = width * s.delta
    k = epanechnikov()
    f = lambda occ: est.estimate(s.replace(occurrences=occ, fractional=True), b, k, kind).raw
    combo = 2.5 * s.occurrences + 0.5 * o2
    assert_allclose(f(combo), 2.5 * f(s.occurrences.astype(float)) + 0.5 * f(o2.astype(float)), rtol=1e-10, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.2, 8.0), st.sampled_from(list(Side)))
def test_discrete_identities_for_one_sided_kernels(seed, width, side):
    s = random_sample(seed)
    b = width * s.delta
    k = one_sided(sextic(), side)
    ones = est.ll_hazard(s.noiseless(lambda t: 1.0 + 0 * t), b, k)
    times = est.ll_hazard(s.noiseless(lambda t: t), b, k)
    ok = ~ones.undefined
    assert_allclose(ones.raw[ok], 1.0, rtol=1e-9)
    assert_allclose(times.raw[ok], s.times[ok], rtol=1e-9)


def test_published_values_are_clipped_and_exportable(tmp_path):
    s = GridSample(0.0, 1.0, [5, 0, 0, 0, 0, 0, 0, 0, 0, 6], [5.0] * 10, n=20)
    e = est.bo_ll_hazard(s, 0.35, epanechnikov())
    assert np.any(e.raw < 0)
    assert np.all(e.values >= 0)
    e.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "time,hazard,side" and len(lines) == 11


def test_bandwidth_must_be_positive():
    with pytest.raises(ValueError):
        est.ll_hazard(uniform_sample(), 0.0, epanechnikov())
