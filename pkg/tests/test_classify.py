import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from basinforge.analysis.floquet import find_periodic_orbit
from basinforge.analysis.thresholds import theta0_from_C
from basinforge.classify import (
    ClassifierConfig, Origin, Resonance, Unclassified, canonical_point, classify,
    cluster_variants, detect_period, label_name, settle_end, strobe, transient_time,
    winding_count,
)
from basinforge.integrate import IntegratorConfig
from basinforge.models import (
    Constant, CubicParams, LinearRamp, PhaseState, SpinOrbitParams, energy_I,
    global_attraction_bound,
)

TWO_PI = 2 * math.pi
RK = IntegratorConfig(method="rk", tol=1e-11)
CFG = ClassifierConfig()


def test_config_defaults_and_validation():
    assert CFG.n_confirm_periods == 48
    with pytest.raises(ValueError):
        ClassifierConfig(q_max=0)
    with pytest.raises(ValueError):
        ClassifierConfig(period_match_tol=-1.0)
    with pytest.raises(ValueError):
        ClassifierConfig(q_max=16, n_confirm_periods=10)


def test_transient_time_examples():
    assert transient_time(0.01) == pytest.approx(319 * TWO_PI)
    assert transient_time(0.015) == pytest.approx(213 * TWO_PI)
    t = transient_time(0.0005)
    assert 40000 <= t < 40000 + TWO_PI
    assert round(t / TWO_PI) == 6367
    with pytest.raises(ValueError):
        transient_time(0.0)


@given(st.floats(1e-5, 10.0))
def test_transient_time_is_on_strobe_grid(g):
    t = transient_time(g)
    k = t / TWO_PI
    assert abs(k - round(k)) < 1e-9
    assert 20 / g <= t + 1e-9 < 20 / g + TWO_PI + 1e-9


def test_settle_end_includes_ramp():
    p = CubicParams(0.1, LinearRamp(0.015, 25.0))
    assert settle_end(p) >= 25.0 / 0.015 + 20 / 0.015
    assert settle_end(p) < 25.0 / 0.015 + 20 / 0.015 + TWO_PI


def test_detect_period_constant_and_alternating():
    assert detect_period(np.tile([0.3, -0.1], (48, 1))) == 1
    ab = np.array([[0.5, 0.1], [-0.5, -0.1]] * 24)
    assert detect_period(ab) == 2
    abc = np.array([[0.5, 0.1], [-0.5, -0.1], [0.2, 0.7]] * 16)
    assert detect_period(abc) == 3


def test_detect_period_random_walk_is_none():
    rng = np.random.default_rng(3)
    walk = np.cumsum(rng.normal(size=(48, 2)), axis=0)
    assert detect_period(walk) is None


def test_detect_period_needs_enough_samples():
    with pytest.raises(ValueError):
        detect_period(np.zeros((10, 2)))


def test_detect_period_uses_angle_wrapping():
    s = np.zeros((48, 2))
    s[:, 0] = 0.3 + TWO_PI * np.arange(48)  # one revolution per period
    s[:, 1] = 1.0
    assert detect_period(s, angular=True) == 1
    assert detect_period(s, angular=False) is None


@settings(max_examples=30)
@given(st.integers(1, 16), st.integers(0, 2**31))
def test_detect_period_recovers_planted_period(q, seed):
    rng = np.random.default_rng(seed)
    cycle = rng.uniform(-1, 1, size=(q, 2))
    # make the cycle points distinct well beyond tolerance
    cycle[:, 0] = np.linspace(-1, 1, q) + 0.01 * cycle[:, 0]
    s = np.array([cycle[i % q] for i in range(48)])
    assert detect_period(s) == q


def test_strobe_origin_stays_at_origin():
    p = CubicParams(0.1, Constant(0.01))
    s = strobe(p, PhaseState(0.0, 0.0), 5)
    assert np.all(s.raw == 0.0)
    assert np.allclose(s.t, TWO_PI * np.arange(1, 6))


def test_strobe_before_transient_has_no_period():
    p = CubicParams(0.1, Constant(0.01))
    s = strobe(p, PhaseState(0.9, 0.4), 48)
    assert detect_period(s) is None


def test_strobe_reports_wrapped_angles():
    p = SpinOrbitParams(0.0, 0.01, Constant(1e-3))
    s = strobe(p, PhaseState(1.0, 1.0), 4, RK)
    assert np.all((0 <= s.wrapped[:, 0]) & (s.wrapped[:, 0] < TWO_PI))
    assert s.raw[-1, 0] > TWO_PI  # raw lift keeps counting turns


@pytest.fixture(scope="module")
def cubic_half_orbit():
    params = CubicParams(0.1, Constant(0.01))
    return params, find_periodic_orbit(params, 1, 2)


def test_exact_orbit_repeats_with_period_two(cubic_half_orbit):
    params, orbit = cubic_half_orbit
    s = strobe(params, orbit, 48)
    assert detect_period(s) == 2
    assert np.max(np.abs(s.raw[2:] - s.raw[:-2])) < CFG.period_match_tol


def test_winding_of_cubic_half_orbit(cubic_half_orbit):
    params, orbit = cubic_half_orbit
    assert winding_count(params, orbit, 2) == 1


def test_classify_cubic_half_orbit(cubic_half_orbit):
    params, orbit = cubic_half_orbit
    label, rep = classify(params, orbit)
    assert label == Resonance(1, 2)
    assert rep is not None
    pts = strobe(params, orbit, 2).raw
    assert (rep.q, rep.v) == pytest.approx(tuple(canonical_point(pts, False)), abs=1e-5)


def test_classify_origin_above_global_bound():
    params = CubicParams(0.1, Constant(0.06))
    assert 0.06 > global_attraction_bound(0.1)
    rng = random.Random(1)
    for _ in range(20):
        ic = PhaseState(rng.uniform(-1, 1), rng.uniform(-1, 1))
        assert classify(params, ic) == (Origin(), None)


def test_classify_origin_arm_for_origin_ic():
    assert classify(CubicParams(0.1, Constant(0.01)), PhaseState(0.0, 0.0))[0] == Origin()


def test_classify_spin_orbit_synchronous():
    params = SpinOrbitParams(0.0, 0.01, Constant(1e-4))
    label, rep = classify(params, PhaseState(math.pi / 2 + 0.05, 1.0), icfg=RK)
    assert label == Resonance(1, 1)
    assert rep.v == pytest.approx(1.0, abs=1e-3)


def test_classify_spin_orbit_three_halves():
    e, eps, g = 0.2056, 0.01, 0.005
    params = SpinOrbitParams(e, eps, Constant(g))
    th, _ = theta0_from_C(e, 3, 2, g / eps)
    label, _ = classify(params, PhaseState(th, 1.5), icfg=RK)
    assert label == Resonance(3, 2)


def test_classify_spin_orbit_never_reports_origin():
    params = SpinOrbitParams(0.0, 0.01, Constant(1e-3))
    label, _ = classify(params, PhaseState(0.0, 0.0), icfg=RK)
    assert not isinstance(label, Origin)


def test_classify_is_reproducible():
    params = CubicParams(0.1, Constant(0.005))
    ic = PhaseState(0.37, -0.81)
    assert classify(params, ic) == classify(params, ic)


def test_unclassified_when_period_exceeds_q_max(cubic_half_orbit):
    params, orbit = cubic_half_orbit
    label, rep = classify(params, orbit, ClassifierConfig(q_max=1, n_confirm_periods=4))
    assert isinstance(label, Unclassified) and rep is None


def test_resonance_label_invariants():
    with pytest.raises(ValueError):
        Resonance(2, 4)
    with pytest.raises(ValueError):
        Resonance(1, 0)
    assert Resonance(-1, 2).omega == -0.5
    assert label_name(Resonance(1, 1, 1), 2) == "1:1b"
    assert label_name(Resonance(1, 2), 1) == "1:2"
    assert label_name(Origin()) == "origin"
    assert label_name(Unclassified("x")) == "unclassified"


# ---------------------------------------------------------------------------
# variant clustering


def _pairs(points, p=1, q=1):
    return [(Resonance(p, q), pt) for pt in points]


def test_cluster_single_variant():
    pts = [(0.5 + 0.001 * i, 0.2) for i in range(10)]
    out, flagged = cluster_variants(_pairs(pts))
    assert {lab.variant for lab in out} == {0}
    assert not flagged


def test_cluster_two_variants_sorted_by_centroid():
    pts = [(0.8, 0.0)] * 5 + [(-0.8, 0.0)] * 6
    out, _ = cluster_variants(_pairs(pts))
    assert [lab.variant for lab in out] == [1] * 5 + [0] * 6


def test_cluster_flags_too_many_variants():
    pts = [(0.2 * i, 0.0) for i in range(6)]
    _, flagged = cluster_variants(_pairs(pts))
    assert flagged == {(1, 1)}


def test_cluster_leaves_other_labels_alone():
    res = [(Origin(), None), (Resonance(1, 2), (0.1, 0.1)), (Unclassified(), None)]
    out, _ = cluster_variants(res)
    assert out == [Origin(), Resonance(1, 2, 0), Unclassified()]


def test_cluster_wraps_angles():
    # 0.01 and 2 pi - 0.01 are the same point of the circle
    pts = [(0.01, 1.0), (TWO_PI - 0.01, 1.0)]
    out, _ = cluster_variants(_pairs(pts), angular=True)
    assert out[0].variant == out[1].variant == 0


@settings(max_examples=30)
@given(st.lists(st.sampled_from([(0.7, 0.1), (-0.7, -0.1), (0.0, 0.9)]), min_size=1, max_size=30),
       st.randoms())
def test_cluster_labels_do_not_depend_on_order(pts, rnd):
    jitter = [(x + 1e-3 * (i % 5), y) for i, (x, y) in enumerate(pts)]
    out, _ = cluster_variants(_pairs(jitter))
    by_point = {pt: lab.variant for pt, lab in zip(jitter, out)}
    order = list(range(len(jitter)))
    rnd.shuffle(order)
    shuffled = [jitter[i] for i in order]
    out2, _ = cluster_variants(_pairs(shuffled))
    assert all(by_point[pt] == lab.variant for pt, lab in zip(shuffled, out2))


def test_origin_energy_threshold_is_energy_based():
    # a point with small position but large velocity is not the origin
    assert energy_I(PhaseState(1e-5, 0.5)) > CFG.origin_energy_tol
