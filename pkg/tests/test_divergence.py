import math

import numpy as np
import pytest

from specflow.circle import CirclePoint, ONE
from specflow.divergence import (CLOSE, band_bounds, band_check, default_c0, default_p_gamma, divergence_interval_I,
                                 divergence_interval_J, dyadic_index, in_singular_window, interval_from_segments,
                                 match_profile, occupancy_W, pd_statistics, sample_pairs, separated_fraction,
                                 v_complement_measure)
from specflow.errors import NotClose
from specflow.flow import FlowPoint, pair_segments
from specflow.roof import birkhoff_sum

from conftest import random_point


@pytest.fixture(scope="module")
def pairs(arnold):
    return sample_pairs(arnold, 6, 2024)


def test_identical_points_never_separate(arnold):
    p = FlowPoint(CirclePoint.from_float(0.3), 0.2)
    iv, seg = divergence_interval_I(arnold, p, p, 500.0)
    assert iv.censored_minus and iv.censored_plus
    assert separated_fraction(seg, iv, default_c0(arnold)) == 0.0
    jv = divergence_interval_J(arnold, p.x, p.x, 10 ** 4)
    assert jv.censored and jv.k is None and not jv.cocy_pass


@pytest.mark.parametrize("tau", [0.005, -0.003, 0.0099])
def test_flow_shifted_pair_is_censored(arnold, tau):
    rng = np.random.default_rng(int(abs(tau) * 1e4))
    x = random_point(rng, 0.05)
    p = FlowPoint(x, 0.1)
    q, _ = arnold.flow(p, tau)
    iv, seg = divergence_interval_I(arnold, p, q, 2000.0)
    assert iv.censored_minus and iv.censored_plus
    assert separated_fraction(seg, iv, default_c0(arnold)) == 0.0 or abs(tau) > default_c0(arnold)
    # the shift is along the flow, so d^f never leaves the tau scale
    assert seg.d.max() <= abs(tau) + 1e-9


def test_not_close_rejected(arnold):
    p = FlowPoint(CirclePoint.from_float(0.3), 0.2)
    q = FlowPoint(CirclePoint.from_float(0.4), 0.2)
    with pytest.raises(NotClose):
        divergence_interval_I(arnold, p, q, 10.0)
    with pytest.raises(NotClose):
        divergence_interval_J(arnold, p.x, q.x, 10)


def test_transverse_pairs_have_finite_intervals(arnold, pairs):
    for pr in pairs:
        iv, seg = divergence_interval_I(arnold, pr.p, pr.q, 1e6)
        assert not iv.censored
        assert iv.t_minus < 0 < iv.t_plus


def test_interval_grid_matches_exact(arnold, pairs):
    pr = pairs[0]
    iv, seg = divergence_interval_I(arnold, pr.p, pr.q, 1e6)
    for step in (1e-2, 5e-3):
        g = interval_from_segments(seg, method="grid", step=step)
        # the grid finds the first separated grid time; bisection refines it
        assert g.t_plus >= iv.t_plus - 1e-6
        assert g.t_minus <= iv.t_minus + 1e-6
    coarse = interval_from_segments(seg, method="grid", step=1e-2)
    fine = interval_from_segments(seg, method="grid", step=5e-3)
    assert abs(coarse.t_plus - fine.t_plus) < 2e-2 and abs(coarse.t_minus - fine.t_minus) < 2e-2


def test_separated_fraction_grid_close_to_exact(arnold, pairs):
    pr = pairs[1]
    iv, seg = divergence_interval_I(arnold, pr.p, pr.q, 1e6)
    c0 = default_c0(arnold)
    exact = separated_fraction(seg, iv, c0)
    grid = separated_fraction(seg, iv, c0, method="grid", step=1e-2)
    assert 0 <= exact <= 1
    assert grid == pytest.approx(exact, abs=0.02)


def test_J_interval_against_direct_scan(arnold):
    rng = np.random.default_rng(6)
    x = random_point(rng, 0.01)
    y = CirclePoint((x.value + (ONE >> 24)) % ONE)
    jv = divergence_interval_J(arnold, x, y, 10 ** 5)
    assert jv.c <= 0 <= jv.d
    if jv.k is not None:
        assert jv.c <= jv.k[0] <= jv.k[1] <= jv.d
    spec, rot = arnold.roof, arnold.rot

    def diff(n):
        return birkhoff_sum(spec, rot, x, n).value - birkhoff_sum(spec, rot, y, n).value

    if not jv.censored_plus:
        assert abs(diff(jv.d + 1)) >= 1 / 50
        assert all(abs(diff(n)) < 1 / 50 for n in range(max(jv.d - 50, 0), jv.d + 1))
    if not jv.censored_minus:
        assert abs(diff(jv.c - 1)) >= 1 / 50


def test_pd_statistics_rows(arnold, pairs):
    reps = pd_statistics(arnold, pairs, workers=2)
    assert [r.pair_id for r in reps] == list(range(len(pairs)))
    for r in reps:
        assert r.i_interval[0] <= 0 <= r.i_interval[1]
        assert r.j_interval[0] <= 0 <= r.j_interval[1]
        row = r.row()
        assert set(row) >= {"t_minus", "t_plus", "separated_fraction", "cocy_pass"}


def test_pair_sampling_respects_windows(arnold):
    prs = sample_pairs(arnold, 5, 11)
    for pr in prs:
        assert 1e-8 * 0.999 <= pr.distance <= 1e-3 * 1.001
        assert not in_singular_window(arnold, pr.p.x, 1000)
        assert pr.p.s < arnold.g(pr.p.x) and pr.q.s < arnold.g(pr.q.x)
    assert sample_pairs(arnold, 5, 11, workers=4) == prs


def test_band_check_small(arnold):
    res = band_check(arnold, 1000, 5, 3)
    lo, hi = band_bounds(1000)
    for r in res:
        assert lo <= r.distance < hi
        assert r.holds


def test_dyadic_buckets():
    assert dyadic_index(0.0) is None
    assert dyadic_index(0.5) == 1
    assert dyadic_index(0.3) == 1
    assert dyadic_index(0.25) == 2
    for j in range(1, 40):
        assert dyadic_index(2.0 ** -j) == j
        assert dyadic_index(2.0 ** -j * 0.75) == j


def test_match_identical_points(arnold):
    p = FlowPoint(CirclePoint.from_float(0.3), 0.1)
    rep = match_profile(arnold, p, p, 100.0, 4)
    assert len(rep.profiles) == 1 and rep.profiles[0].j_index is None
    assert rep.profiles[0].measure == pytest.approx(100.0)


def test_match_flow_shifted_pair_one_bucket(arnold):
    # same height, base distance exactly 2^-10: the first branch keeps d_1 constant
    x = CirclePoint.from_float(0.3)
    y = CirclePoint((x.value + (ONE >> 10)) % ONE)
    p, q = FlowPoint(x, 0.0), FlowPoint(y, 0.0)
    rep = match_profile(arnold, p, q, 0.5, 4)
    finite = [pr for pr in rep.profiles if pr.j_index is not None]
    assert [pr.j_index for pr in finite] == [10]


def test_match_buckets_sum_to_close_time(arnold, pairs):
    for pr in pairs[:3]:
        for method in ("exact", "grid"):
            R = 300.0
            rep = match_profile(arnold, pr.p, pr.q, R, 4, method=method)
            total = sum(p.measure for p in rep.profiles)
            assert total == pytest.approx(rep.close_time, rel=1e-12)
            assert total <= R * (1 + 1e-12)
        seg = pair_segments(arnold, pr.p, pr.q, 0.0, R)
        rep = match_profile(arnold, pr.p, pr.q, R, 4)
        assert rep.close_time == pytest.approx(float(np.sum(seg.lengths[seg.d < 0.5])), rel=1e-12)


def test_occupancy_report(kochergin):
    rng = np.random.default_rng(4)
    p = FlowPoint(random_point(rng, 0.01), 0.0)
    rep = occupancy_W(kochergin, p, 1000.0)
    assert 0 <= rep.occupied_fraction <= 1 and 0 <= rep.zero_fraction <= 1
    assert rep.p_gamma == default_p_gamma(0.5) > 100 / 0.5
    # short window below the first crossing: N = 0 everywhere is vacuous
    x = CirclePoint.from_float(0.5)
    g = kochergin.g(x)
    short = occupancy_W(kochergin, FlowPoint(x, g / 2), g / 4, step=g / 100)
    assert short.zero_fraction == 1.0 and short.occupied_fraction == 1.0


def test_v_complement_fraction(kochergin):
    rng = np.random.default_rng(12)
    pts = [FlowPoint(random_point(rng, 1e-4), 0.0) for _ in range(50)]
    a = v_complement_measure(kochergin, 100, pts)
    b = v_complement_measure(kochergin, 100, pts)
    assert a == b and 0 <= a.fraction <= 1
    c = v_complement_measure(kochergin, 100, pts, p_gamma=2.0, exponent="2-gamma")
    assert c.exponent == "2-gamma" and 0 <= c.fraction <= 1
    with pytest.raises(ValueError):
        v_complement_measure(kochergin, 5, pts)
    assert CLOSE == 1e-2
    assert math.isfinite(a.sigma)
