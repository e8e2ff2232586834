import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from specflow.circle import CirclePoint
from specflow.entropy import (ScaleSpec, cover_target, estimate_cover, exact_cover_size, fit_exponent,
                              greedy_cover, hamming_matrix, rejection_cap, sample_flow_measure, _tail_mass)
from specflow.errors import DegenerateGrid, Infeasible
from specflow.flow import FlowPoint, OrbitCode


def _codes(rows, r=10.0):
    origin = FlowPoint(CirclePoint(1), 0.0)
    return [OrbitCode(np.asarray(s, dtype=np.uint32), r, 0.1, 4, origin) for s in rows]


def test_scale_sequences_increase():
    n = np.arange(3, 200)
    for sc in ScaleSpec:
        for t in (0.5, 1.0, 2.0):
            assert np.all(np.diff(sc.a(n, t)) > 0)
        assert np.all(sc.a(n, 1.5) > sc.a(n, 1.0))


def test_cover_examples():
    same = _codes([[1, 2, 3]] * 7)
    est = estimate_cover(same, 0.1, 1.0)
    assert est.ball_count == 1 and est.covered_mass == 1.0
    far = _codes([[i] * 5 for i in range(9)])
    est = estimate_cover(far, 0.1, 1.0)
    assert est.ball_count == cover_target(9, 0.1, 1.0)  # one ball per required point
    assert est.ball_count <= est.sample_size
    assert est.covered_mass >= 1.0 - 0.1
    with pytest.raises(Infeasible):
        cover_target(10, -0.5, 1.0)


def test_cover_pairwise_distance_one_needs_all_points():
    # with beta - epsilon forcing every point, distance-1 codes need N balls
    far = _codes([[i] * 5 for i in range(9)])
    dist = hamming_matrix(far)
    centres, covered = greedy_cover(dist, 0.1, 1.1)
    assert len(centres) == 9 and covered == 9


def _random_dist(rng, n):
    rows = rng.integers(0, 3, size=(n, 6))
    return hamming_matrix(_codes(rows.tolist()))


def test_greedy_within_log_factor_of_exhaustive():
    rng = np.random.default_rng(2024)
    bound = 1 + math.log(12)
    for _ in range(1000):
        n = int(rng.integers(2, 13))
        dist = _random_dist(rng, n)
        eps = float(rng.choice([0.2, 0.4, 0.6]))
        beta = float(rng.uniform(eps + 0.05, 1.0))
        g = len(greedy_cover(dist, eps, beta)[0])
        e = exact_cover_size(dist, eps, beta)
        assert e <= g <= bound * max(e, 1)


def test_cover_monotone_in_epsilon_and_beta():
    rng = np.random.default_rng(77)
    for _ in range(20):
        n = int(rng.integers(20, 60))
        dist = _random_dist(rng, n)
        counts = [len(greedy_cover(dist, e, 1.0)[0]) for e in (0.2, 0.4, 0.6, 0.8)]
        assert counts == sorted(counts, reverse=True)
        counts = [len(greedy_cover(dist, 0.3, b)[0]) for b in (0.5, 0.7, 0.9, 1.0)]
        assert counts == sorted(counts)


def test_greedy_tie_break_lowest_index():
    dist = hamming_matrix(_codes([[0, 0], [1, 1], [2, 2]]))
    assert greedy_cover(dist, 0.1, 1.0)[0] == [0, 1, 2]


@settings(max_examples=100, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0, 2), st.sampled_from(["power", "log"]))
def test_fit_recovers_model_exponent(t, c, scale):
    r = np.array([50.0, 100, 200, 400, 800])
    s = ScaleSpec(scale).a(r, t) * math.exp(c) if scale == "log" else r ** t * math.exp(c)
    fit = fit_exponent(list(zip(r, s)), scale)
    assert fit.t_hat == pytest.approx(t, abs=1e-6)
    assert fit.residual <= 1e-9


def test_fit_examples():
    r = np.array([10.0, 20, 40, 80, 160])
    assert fit_exponent(list(zip(r, r ** 1.5)), "power").t_hat == pytest.approx(1.5, abs=1e-6)
    s = r * np.log(r) ** 2
    log_fit = fit_exponent(list(zip(r, s)), "log")
    pow_fit = fit_exponent(list(zip(r, s)), "power")
    assert log_fit.t_hat == pytest.approx(2.0, abs=1e-6)
    # independent least squares via normal equations
    xv, yv = np.log(r), np.log(s)
    slope = np.sum((xv - xv.mean()) * (yv - yv.mean())) / np.sum((xv - xv.mean()) ** 2)
    assert pow_fit.t_hat == pytest.approx(slope, rel=1e-12)
    assert 1.0 < pow_fit.t_hat < 2.0
    assert pow_fit.residual > log_fit.residual
    with pytest.raises(DegenerateGrid):
        fit_exponent([(10, 1), (10, 2), (10, 3)], "power")
    with pytest.raises(ValueError):
        fit_exponent([(10, 1), (20, 2)], "power")


@pytest.mark.parametrize("which", ["arnold", "kochergin"])
def test_sampler_deterministic_across_workers(which, request):
    fl = request.getfixturevalue(which)
    ref, _ = sample_flow_measure(fl, 40, 123, workers=1)
    for w in (4, 8):
        pts, _ = sample_flow_measure(fl, 40, 123, workers=w)
        assert pts == ref
    other, _ = sample_flow_measure(fl, 40, 124)
    assert other != ref


def test_rejection_cap_and_acceptance(arnold):
    cap, tail = rejection_cap(arnold)
    assert tail < 1e-4
    assert _tail_mass(arnold, cap / 1.01) > tail
    pts, info = sample_flow_measure(arnold, 3000, 5, method="rejection")
    # acceptance 1/cap up to the truncated mass; binomial noise on ~3000 successes
    expected = (1 - tail) / cap
    assert info.acceptance == pytest.approx(expected, rel=0.06)


@pytest.mark.parametrize("method", ["rejection", "inverse"])
def test_sampled_heights_uniform_under_roof(arnold, method):
    pts, _ = sample_flow_measure(arnold, 10 ** 4, 77, method=method)
    ratio = np.array([p.s / arnold.g(p.x) for p in pts])
    assert stats.kstest(ratio, "uniform").pvalue > 0.01


def test_sampled_base_marginal(kochergin):
    roof = kochergin.roof
    pts, info = sample_flow_measure(kochergin, 5000, 9)
    xs = np.array([float(p.x) for p in pts])
    cdf = np.vectorize(lambda x: roof.antiderivative(x) / roof.normalizer)
    assert stats.kstest(xs, cdf).pvalue > 0.01


def test_inverse_sampler_used_for_strong_singularity(golden):
    from specflow.flow import SpecialFlow
    from specflow.roof import RoofSpec

    fl = SpecialFlow(golden, RoofSpec.power(0.75))
    pts, info = sample_flow_measure(fl, 20, 1)
    assert info.method == "inverse" and len(pts) == 20
