import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynkin_gnep import harmonic
from dynkin_gnep.harmonic import (
    RegionError,
    hit_probability,
    interval_threshold_payoff,
    left_region,
    middle_region,
    restrict,
    right_region,
    two_threshold_payoff,
)
from dynkin_gnep.rewards import PiecewisePoly, builtin_example


def hump():
    # 0.24 at 0.6, vanishing at both ends
    return PiecewisePoly.single((0.0, 1.0, -1.0))


def test_right_region_reduction_value():
    red = restrict(hump(), right_region(0.6))
    assert red.piece_eval(0.3) == pytest.approx(0.12, abs=1e-14)
    assert red.piece_eval(0.0) == pytest.approx(0.0, abs=1e-14)
    assert red.piece_eval(0.6) == pytest.approx(0.24, abs=1e-14)
    assert red.piece_eval(0.8) == pytest.approx(hump().piece_eval(0.8), abs=1e-14)


def test_left_region_reduction_value():
    red = restrict(hump(), left_region(0.4))
    # linear from g(0.4) at 0.4 down to 0 at 1
    assert red.piece_eval(0.4) == pytest.approx(0.24, abs=1e-14)
    assert red.piece_eval(1.0) == pytest.approx(0.0, abs=1e-14)
    assert red.piece_eval(0.7) == pytest.approx(0.24 * 0.3 / 0.6, abs=1e-14)
    assert red.piece_eval(0.2) == pytest.approx(hump().piece_eval(0.2), abs=1e-14)


def test_middle_region_reduction():
    red = restrict(hump(), middle_region(0.3, 0.6))
    assert red.piece_eval(0.15) == pytest.approx(hump().piece_eval(0.3) * 0.5, abs=1e-14)
    assert red.piece_eval(0.45) == pytest.approx(hump().piece_eval(0.45), abs=1e-14)
    assert red.piece_eval(0.8) == pytest.approx(hump().piece_eval(0.6) * 0.5, abs=1e-14)
    assert red.piece_eval(0.0) == pytest.approx(0.0, abs=1e-14)
    assert red.piece_eval(1.0) == pytest.approx(0.0, abs=1e-14)


def test_middle_region_needs_interior_left_edge():
    with pytest.raises(RegionError):
        restrict(hump(), middle_region(0.0, 0.5))


def test_hit_probability_values():
    assert hit_probability(0.5, 0.2, 0.8) == pytest.approx(0.5)
    assert hit_probability(0.2, 0.2, 0.8) == 1.0
    assert hit_probability(0.8, 0.2, 0.8) == 0.0
    with pytest.raises(RegionError):
        hit_probability(0.1, 0.2, 0.8)
    with pytest.raises(RegionError):
        hit_probability(0.5, 0.8, 0.2)


def test_two_threshold_payoff_interpolates():
    f1 = PiecewisePoly.line(0.0, 5.0)     # value 1 at 0.2
    g1 = PiecewisePoly.line(0.0, 3.75)    # value 3 at 0.8
    m = two_threshold_payoff(f1, g1, 0.2, 0.8)
    assert m.piece_eval(0.5) == pytest.approx(2.0, abs=1e-14)
    assert m.piece_eval(0.1) == pytest.approx(0.5, abs=1e-14)
    assert m.piece_eval(0.9) == pytest.approx(3.375, abs=1e-14)


def test_payoff_matches_hit_probability_composition():
    spec = builtin_example("zero_sum")
    ell, r = 0.25, 0.75
    m = two_threshold_payoff(spec.f1, spec.g1, ell, r)
    xs = np.linspace(ell, r, 33)
    p = hit_probability(xs, ell, r)
    expected = spec.f1.piece_eval(ell) * p + spec.g1.piece_eval(r) * (1.0 - p)
    np.testing.assert_allclose(m.piece_eval(xs), expected, atol=1e-13)


def test_payoff_continuity_on_grid():
    spec = builtin_example("global_stable")
    m = two_threshold_payoff(spec.g2, spec.f2, 0.3, 0.7)
    xs = np.linspace(0.0, 1.0, 4097)
    vals = m.piece_eval(xs)
    jumps = np.abs(np.diff(vals))
    assert float(jumps.max()) < 2e-3  # bounded increments of a continuous map


def test_interval_threshold_payoff_shape():
    spec = builtin_example("g2_three_player")
    l1, l2, r = 0.2, 0.3, 0.7
    m = interval_threshold_payoff(spec.f1, spec.g1, l1, l2, r)
    xs_inner = np.linspace(l1, l2, 9)
    np.testing.assert_allclose(
        m.piece_eval(xs_inner), spec.f1.piece_eval(xs_inner), atol=1e-13
    )
    assert m.piece_eval(r) == pytest.approx(spec.g1.piece_eval(r), abs=1e-13)
    assert m.piece_eval(0.0) == pytest.approx(0.0, abs=1e-14)
    # linear across both gaps: vanishing second differences
    for lo, hi in ((0.0, l1), (l2, r)):
        zs = np.linspace(lo, hi, 21)[1:-1]
        vals = m.piece_eval(zs)
        second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
        np.testing.assert_allclose(second, 0.0, atol=1e-12)


def test_interval_payoff_rejects_degenerate_left_edge():
    spec = builtin_example("g2_three_player")
    with pytest.raises(RegionError):
        interval_threshold_payoff(spec.f1, spec.g1, 0.0, 0.3, 0.7)


def test_reduction_majorizes_nothing_above_obstacle():
    # reduce(g, A) <= g pointwise for concave nonnegative g
    g = hump()
    red = restrict(g, right_region(0.55))
    xs = np.linspace(0.0, 1.0, 257)
    assert np.all(red.piece_eval(xs) <= g.piece_eval(xs) + 1e-12)


@given(
    ell=st.floats(min_value=0.05, max_value=0.45),
    r=st.floats(min_value=0.55, max_value=0.95),
    x=st.floats(min_value=0.0, max_value=1.0),
)
@settings(max_examples=80, deadline=None)
def test_hit_probability_bounds_and_monotonicity(ell, r, x):
    x = ell + (r - ell) * x
    p = hit_probability(x, ell, r)
    assert 0.0 <= p <= 1.0
    if x + 1e-3 <= r:
        assert hit_probability(x + 1e-3, ell, r) <= p


@given(r=st.floats(min_value=0.1, max_value=0.9))
@settings(max_examples=50, deadline=None)
def test_right_reduction_is_linear_below_threshold(r):
    red = restrict(hump(), right_region(r))
    zs = np.linspace(0.0, r, 17)
    vals = red.piece_eval(zs)
    second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
    np.testing.assert_allclose(second, 0.0, atol=1e-12)


@given(
    ell=st.floats(min_value=0.05, max_value=0.4),
    r=st.floats(min_value=0.6, max_value=0.95),
)
@settings(max_examples=50, deadline=None)
def test_two_threshold_payoff_between_endpoint_values(ell, r):
    spec = builtin_example("zero_sum")
    m = two_threshold_payoff(spec.f1, spec.g1, ell, r)
    lo_v = spec.f1.piece_eval(ell)
    hi_v = spec.g1.piece_eval(r)
    xs = np.linspace(ell, r, 21)
    vals = m.piece_eval(xs)
    assert np.all(vals <= max(lo_v, hi_v) + 1e-12)
    assert np.all(vals >= min(lo_v, hi_v) - 1e-12)
