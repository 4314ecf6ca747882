import math

import numpy as np
import pytest

from dynkin_gnep import harmonic
from dynkin_gnep.montecarlo import (
    SimulationError,
    convergence_ladder,
    deviation_scan,
    discounted_exit_estimate,
    estimate_payoff,
    martingale_estimate,
    verify_payoffs,
)
from dynkin_gnep.rewards import builtin_example
from dynkin_gnep.transform import constant_dynamics, transform_game

ZS = builtin_example("zero_sum")

ELL_STAR = (1.0 - math.sqrt(0.2)) / 2.0
R_STAR = (1.0 + math.sqrt(0.2)) / 2.0

FAST = {"paths": 20_000, "dt": 1e-3}


def test_repeat_runs_bit_identical():
    a = estimate_payoff(ZS, 1, (0.27, 0.72), 0.5, paths=4000, dt=1e-3, seed=7)
    b = estimate_payoff(ZS, 1, (0.27, 0.72), 0.5, paths=4000, dt=1e-3, seed=7)
    assert a.value == b.value
    assert a.se == b.se
    assert a.n == b.n


def test_seed_changes_the_draw():
    a = estimate_payoff(ZS, 1, (0.27, 0.72), 0.5, paths=4000, dt=1e-3, seed=7)
    b = estimate_payoff(ZS, 1, (0.27, 0.72), 0.5, paths=4000, dt=1e-3, seed=8)
    assert a.value != b.value


def test_own_stop_region_pays_exactly():
    est = estimate_payoff(ZS, 1, (ELL_STAR, R_STAR), 0.1, **FAST)
    assert est.value == ZS.f1.piece_eval(0.1)
    assert est.se == 0.0
    est = estimate_payoff(ZS, 2, (ELL_STAR, R_STAR), 0.9, **FAST)
    assert est.value == ZS.f2.piece_eval(0.9)
    assert est.se == 0.0


def test_opponent_stop_region_pays_exactly():
    est = estimate_payoff(ZS, 2, (ELL_STAR, R_STAR), 0.1, **FAST)
    assert est.value == ZS.g2.piece_eval(0.1)
    assert est.se == 0.0
    est = estimate_payoff(ZS, 1, (ELL_STAR, R_STAR), 0.9, **FAST)
    assert est.value == ZS.g1.piece_eval(0.9)
    assert est.se == 0.0


def test_midpoint_payoffs_match_closed_maps():
    map1 = harmonic.two_threshold_payoff(ZS.f1, ZS.g1, ELL_STAR, R_STAR)
    map2 = harmonic.two_threshold_payoff(ZS.g2, ZS.f2, ELL_STAR, R_STAR)
    e1 = estimate_payoff(ZS, 1, (ELL_STAR, R_STAR), 0.5, **FAST)
    e2 = estimate_payoff(ZS, 2, (ELL_STAR, R_STAR), 0.5, **FAST)
    assert e1.within(float(map1.piece_eval(0.5)))
    assert e2.within(float(map2.piece_eval(0.5)))
    assert e1.se > 0.0
    assert e1.n == FAST["paths"]


def test_estimate_serializes_with_run_parameters():
    est = estimate_payoff(ZS, 1, (ELL_STAR, R_STAR), 0.5, paths=2000, dt=1e-3, seed=3)
    d = est.to_dict()
    assert d["n"] == 2000
    assert d["dt"] == 1e-3
    assert d["seed"] == 3
    assert set(d) == {"value", "se", "n", "dt", "seed"}


def test_argument_validation():
    with pytest.raises(SimulationError):
        estimate_payoff(ZS, 3, (0.2, 0.8), 0.5)
    with pytest.raises(SimulationError):
        estimate_payoff(ZS, 1, (0.8, 0.2), 0.5, **FAST)
    with pytest.raises(SimulationError):
        estimate_payoff(ZS, 1, (0.2, 0.8), 0.5, paths=2000, dt=5e-3)


def test_verify_payoffs_small_budget():
    check = verify_payoffs(ZS, ELL_STAR, R_STAR, paths=30_000, dt=1e-3, seed=11)
    assert check.ok
    assert check.forced == 0
    assert len(check.reports) == 10
    for rep in check.reports:
        assert rep.payoff1.within(rep.closed_payoff1)
        assert rep.payoff2.within(rep.closed_payoff2)
        assert rep.low_hit.within(rep.closed_low_hit)
        assert 0.0 <= rep.closed_low_hit <= 1.0


def test_deviation_scan_base_point_is_exactly_zero():
    scan = deviation_scan(
        ZS, ELL_STAR, R_STAR, player=1,
        grid=np.array([0.2, ELL_STAR, 0.35]),
        paths=4000, dt=1e-3, seed=5,
    )
    base = [p for p in scan.points if p.threshold == ELL_STAR]
    assert len(base) == 1
    assert base[0].improvement == 0.0
    assert base[0].se == 0.0


def test_deviation_scan_accepts_equilibrium():
    scan = deviation_scan(
        ZS, ELL_STAR, R_STAR, player=1, grid_size=20, paths=20_000, dt=1e-3, seed=9,
    )
    assert scan.ok
    assert scan.max_improvement <= 3.0 * max(p.se for p in scan.points)


def test_deviation_scan_flags_pushed_upper_threshold():
    # player 2 held away from its best response must show a real gain
    scan = deviation_scan(
        ZS, ELL_STAR, R_STAR + 0.06, player=2,
        grid_size=25, paths=20_000, dt=5e-4, seed=13,
    )
    assert not scan.ok
    best = max(scan.points, key=lambda p: p.improvement - 3.0 * p.se)
    assert best.improvement > 3.0 * best.se
    assert abs(best.threshold - R_STAR) < 0.04


def test_ladder_slope_shows_half_order_bias():
    rep = convergence_ladder(0.3, 0.5, 0.35, paths=50_000, seed=42)
    assert rep.ok
    assert 0.3 <= rep.slope <= 0.7
    dts = [r.dt for r in rep.rungs]
    assert dts == sorted(dts, reverse=True)
    assert rep.closed_form == pytest.approx(
        harmonic.hit_probability(0.35, 0.3, 0.5), abs=1e-15
    )


def test_discounted_exit_matches_killed_hitting_factors():
    lo, hi, z0, rate = 0.3, 0.7, 0.45, 0.5
    est = discounted_exit_estimate(
        constant_dynamics(0.0, 1.0), rate, z0, lo, hi, 2.0, 1.0,
        paths=20_000, dt=1e-3, seed=21,
    )
    denom = math.sinh(hi - lo)
    closed = 2.0 * math.sinh(hi - z0) / denom + 1.0 * math.sinh(z0 - lo) / denom
    assert est.within(closed)
    assert est.se > 0.0


def test_discounted_exit_rejects_negative_rate():
    with pytest.raises(SimulationError):
        discounted_exit_estimate(
            constant_dynamics(0.0, 1.0), -0.1, 0.5, 0.3, 0.7, 1.0, 0.0
        )


def test_martingale_property_of_killed_eigenfunction():
    import dataclasses

    res = transform_game(
        dataclasses.replace(ZS, discount=0.5), constant_dynamics(0.0, 1.0)
    )
    est, target = martingale_estimate(
        constant_dynamics(0.0, 1.0), 0.5, res.rising, 0.4,
        horizon=1.0, paths=20_000, dt=1e-3, seed=17,
    )
    assert target == pytest.approx(math.exp(0.4), abs=1e-8)
    assert est.within(target)


def test_two_interval_estimate_matches_closed_map():
    spec = builtin_example("g2_three_player")
    l1, l2, r = 0.19559346621861243, 0.26528349640738413, 0.8920729665908224
    closed = harmonic.interval_threshold_payoff(spec.f1, spec.g1, l1, l2, r)
    est = estimate_payoff(spec, 1, ((l1, l2), r), l1 / 2, **FAST)
    assert est.within(float(closed.piece_eval(l1 / 2)))
    inside = estimate_payoff(spec, 1, ((l1, l2), r), 0.22, **FAST)
    assert inside.se == 0.0
    assert inside.value == spec.f1.piece_eval(0.22)


def test_two_interval_pair_validation():
    spec = builtin_example("g2_three_player")
    with pytest.raises(SimulationError):
        estimate_payoff(spec, 1, ((0.3, 0.2), 0.9), 0.5, **FAST)
    with pytest.raises(SimulationError):
        estimate_payoff(spec, 1, ((0.0, 0.2), 0.9), 0.5, **FAST)
