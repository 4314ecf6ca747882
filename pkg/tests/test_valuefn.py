import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynkin_gnep import harmonic
from dynkin_gnep.rewards import builtin_example
from dynkin_gnep.valuefn import (
    StoppingError,
    player1_interval_problem,
    player1_problem,
    player2_problem,
    solve_auxiliary,
    upper_concave_hull,
)

ZS = builtin_example("zero_sum")

ELL_STAR = (1.0 - math.sqrt(0.2)) / 2.0
R_STAR = (1.0 + math.sqrt(0.2)) / 2.0


def test_hull_keeps_concave_data():
    xs = np.linspace(0.0, 1.0, 101)
    vs = xs * (1.0 - xs)
    hull, idx = upper_concave_hull(xs, vs)
    assert np.allclose(hull, vs, atol=1e-15)
    assert idx[0] == 0 and idx[-1] == 100


def test_hull_bridges_a_dip():
    xs = np.array([0.0, 0.5, 1.0])
    hull, idx = upper_concave_hull(xs, np.array([0.0, -1.0, 0.0]))
    assert np.allclose(hull, [0.0, 0.0, 0.0])
    assert list(idx) == [0, 2]


def test_hull_chords_a_vee():
    xs = np.linspace(0.0, 1.0, 201)
    vs = np.abs(xs - 0.5)
    hull, idx = upper_concave_hull(xs, vs)
    assert np.allclose(hull, 0.5, atol=1e-12)
    assert list(idx) == [0, 200]


def test_hull_rejects_short_or_misaligned_input():
    with pytest.raises(StoppingError):
        upper_concave_hull(np.array([0.0]), np.array([1.0]))
    with pytest.raises(StoppingError):
        upper_concave_hull(np.array([0.0, 1.0]), np.array([1.0]))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(min_value=-10.0, max_value=10.0), min_size=3, max_size=40)
)
def test_hull_majorant_concave_idempotent(values):
    vs = np.asarray(values)
    xs = np.linspace(0.0, 1.0, vs.size)
    hull, _ = upper_concave_hull(xs, vs)
    assert np.all(hull >= vs - 1e-9)
    assert np.all(np.diff(hull, 2) <= 1e-9)
    again, _ = upper_concave_hull(xs, hull)
    assert np.allclose(again, hull, atol=1e-12)


def test_auxiliary_recovers_lower_contact_edge():
    base = harmonic.restrict(ZS.g1, harmonic.right_region(R_STAR))
    sol = solve_auxiliary(ZS.f1 - base, base, 0.0, R_STAR, grid=2048)
    assert sol.converged
    assert len(sol.contact) == 1
    left, right = sol.contact[0]
    assert left == pytest.approx(0.0, abs=1e-12)
    assert right == pytest.approx(ELL_STAR, abs=1e-6)
    assert sol.grid_size >= 2048


def test_auxiliary_rejects_bad_interval():
    with pytest.raises(StoppingError):
        solve_auxiliary(ZS.f1, ZS.g1, 0.7, 0.3)


def test_player1_threshold_and_contact():
    sol = player1_problem(ZS, R_STAR)
    assert sol.threshold == pytest.approx(ELL_STAR, abs=1e-6)
    assert sol.contact[0][0] == pytest.approx(0.0, abs=1e-12)


def test_player1_value_matches_closed_map():
    sol = player1_problem(ZS, R_STAR)
    closed = harmonic.two_threshold_payoff(ZS.f1, ZS.g1, ELL_STAR, R_STAR)
    xs = np.linspace(0.0, 1.0, 4096)
    assert np.max(np.abs(sol.full_value(xs) - closed(xs))) < 1e-6


def test_player1_value_dominates_stop_reward():
    # slack covers the chord error of the linear readback between grid nodes
    sol = player1_problem(ZS, R_STAR)
    xs = np.linspace(0.0, R_STAR, 1500)
    assert np.all(sol.full_value(xs) >= ZS.f1.piece_eval(xs) - 1e-8)


def test_player1_value_is_opponent_reward_past_threshold():
    sol = player1_problem(ZS, R_STAR)
    xs = np.linspace(R_STAR, 1.0, 400)
    assert np.allclose(sol.full_value(xs), ZS.g1.piece_eval(xs), atol=1e-12)


def test_player2_reflection_mirrors_player1():
    sol = player2_problem(ZS, ELL_STAR)
    assert sol.threshold == pytest.approx(R_STAR, abs=1e-6)
    l, r = sol.contact[-1]
    assert r == pytest.approx(1.0, abs=1e-12)
    assert l == pytest.approx(R_STAR, abs=1e-6)
    closed = harmonic.two_threshold_payoff(ZS.g2, ZS.f2, ELL_STAR, R_STAR)
    xs = np.linspace(0.0, 1.0, 4096)
    assert np.max(np.abs(sol.full_value(xs) - closed(xs))) < 1e-6


def test_aux_value_vanishes_outside_the_window():
    sol = player1_problem(ZS, R_STAR)
    assert sol.aux_value(R_STAR + 0.05) == 0.0
    assert sol.aux_value(np.array([0.9, 0.99])).tolist() == [0.0, 0.0]


def test_threshold_argument_validation():
    with pytest.raises(StoppingError):
        player1_problem(ZS, 0.0)
    with pytest.raises(StoppingError):
        player1_problem(ZS, 1.2)
    with pytest.raises(StoppingError):
        player2_problem(ZS, 1.0)
    with pytest.raises(StoppingError):
        player2_problem(ZS, -0.1)


def test_interval_problem_finds_interior_contact():
    spec = builtin_example("g2_three_player")
    sol = player1_interval_problem(spec, 0.8920729669684236, grid=2048)
    interior = [c for c in sol.contact if c[0] > 1e-9]
    assert len(interior) == 1
    l1, l2 = interior[0]
    assert l1 == pytest.approx(0.1955934648055023, abs=1e-4)
    assert l2 == pytest.approx(0.2652834958026013, abs=1e-4)
    assert sol.threshold == pytest.approx(l2, abs=1e-9)


def test_contact_mask_marks_stop_region_only():
    sol = player1_problem(ZS, R_STAR, grid=1024)
    mask = sol.contact_mask()
    inside = sol.xs <= ELL_STAR - 1e-3
    outside = (sol.xs >= ELL_STAR + 1e-3) & (sol.xs <= R_STAR - 1e-3)
    assert np.all(mask[inside])
    assert not np.any(mask[outside])
