import dataclasses
import math

import numpy as np
import pytest

from dynkin_gnep.equilibrium import solve
from dynkin_gnep.rewards import PiecewisePoly, SpecFormatError, builtin_example
from dynkin_gnep.transform import (
    DiffusionSpec,
    TransformError,
    constant_dynamics,
    transform_game,
)

ZS = builtin_example("zero_sum")
ZGRID = np.linspace(0.0, 1.0, 2001)


@pytest.fixture(scope="module")
def unit_drift():
    return transform_game(ZS, constant_dynamics(1.0, 1.0))


@pytest.fixture(scope="module")
def killed_bm():
    spec = dataclasses.replace(ZS, discount=0.5)
    return transform_game(spec, constant_dynamics(0.0, 1.0))


def test_unit_drift_scale_matches_closed_form(unit_drift):
    closed = (1.0 - np.exp(-2.0 * ZGRID)) / (1.0 - math.exp(-2.0))
    err = float(np.max(np.abs(unit_drift.forward(ZGRID) - closed)))
    assert err <= 1e-8
    assert err == pytest.approx(1.7790861839284133e-10, rel=1e-3)


def test_unit_drift_checks_pass(unit_drift):
    checks = unit_drift.checks
    assert checks.ok
    assert checks.monotone
    assert checks.scale_residual == pytest.approx(1.6245547912184757e-09, rel=1e-3)
    assert checks.scale_residual < 1e-6
    assert checks.roundtrip_error == 0.0
    assert set(checks.refit_errors) == {"f1", "g1", "h1", "f2", "g2", "h2"}
    assert max(checks.refit_errors.values()) < 1e-6
    assert checks.refit_errors["f1"] == pytest.approx(3.578012653659979e-07, rel=1e-3)


def test_unit_drift_equilibrium_maps_back(unit_drift):
    sol, cert = solve(unit_drift.game)
    assert cert.ok
    ell_u, r_u = sol.thresholds
    assert ell_u == pytest.approx(0.5361852418926363, abs=1e-8)
    assert r_u == pytest.approx(0.9005212139402403, abs=1e-8)
    ell_z, r_z = unit_drift.unmap_thresholds(ell_u, r_u)
    assert ell_z == pytest.approx(0.3114566360152119, abs=1e-8)
    assert r_z == pytest.approx(0.7540026211384296, abs=1e-8)
    back = unit_drift.map_thresholds(ell_z, r_z)
    assert back[0] == pytest.approx(ell_u, abs=1e-9)
    assert back[1] == pytest.approx(r_u, abs=1e-9)


def test_driftless_map_is_identity():
    res = transform_game(ZS, constant_dynamics(0.0, 1.0))
    assert float(np.max(np.abs(res.forward(ZGRID) - ZGRID))) < 1e-10
    assert res.rising is None and res.falling is None
    assert res.discount_factor(0.3) == 1.0


def test_killed_eigenfunctions_match_exponentials(killed_bm):
    assert float(np.max(np.abs(killed_bm.rising(ZGRID) - np.exp(ZGRID)))) <= 1e-8
    assert float(np.max(np.abs(killed_bm.falling(ZGRID) - np.exp(1.0 - ZGRID)))) <= 1e-8
    closed = (np.exp(2.0 * ZGRID) - 1.0) / (math.e**2 - 1.0)
    assert float(np.max(np.abs(killed_bm.forward(ZGRID) - closed))) <= 1e-8
    assert killed_bm.scale_map.strictly_increasing
    assert killed_bm.checks.ok


def test_killed_source_equilibrium_frozen(killed_bm):
    sol, cert = solve(killed_bm.game)
    assert cert.ok
    src = killed_bm.unmap_thresholds(*sol.thresholds)
    assert src[0] == pytest.approx(0.27765994527614213, abs=1e-8)
    assert src[1] == pytest.approx(0.7223588202576792, abs=1e-8)
    assert killed_bm.certify_thresholds(*src).ok


def test_pull_back_matches_discounted_hitting_oracle(killed_bm):
    # killed driftless motion pays sinh ratios on a two-barrier band
    lo, hi = 0.3, 0.7
    denom = math.sinh(hi - lo)
    for z0 in (0.35, 0.45, 0.6):
        p_lo = math.sinh(hi - z0) / denom
        p_hi = math.sinh(z0 - lo) / denom
        want1 = ZS.f1.piece_eval(lo) * p_lo + ZS.g1.piece_eval(hi) * p_hi
        want2 = ZS.g2.piece_eval(lo) * p_lo + ZS.f2.piece_eval(hi) * p_hi
        got1, got2 = killed_bm.pull_back_payoffs(z0, lo, hi)
        assert got1 == pytest.approx(want1, abs=1e-6)
        assert got2 == pytest.approx(want2, abs=1e-6)


def test_discount_factor_tracks_falling_curve(killed_bm):
    zs = np.array([0.2, 0.8])
    assert np.allclose(killed_bm.discount_factor(zs), np.exp(1.0 - zs), atol=1e-8)


def test_volatility_floor_enforced():
    with pytest.raises(SpecFormatError):
        constant_dynamics(0.0, 1e-7)
    dip = PiecewisePoly(
        breakpoints=(0.0, 0.5, 1.0),
        pieces=((1.0, -2.0), (0.0, 2.0)),
    )
    with pytest.raises(SpecFormatError):
        DiffusionSpec(drift=PiecewisePoly.single((0.0,)), volatility=dip)


def test_unnormalized_boundary_rejected():
    bad = dataclasses.replace(ZS, boundary=(0.1, 0.0))
    with pytest.raises(TransformError):
        transform_game(bad, constant_dynamics(0.0, 1.0))


def test_piecewise_drift_reduction_smoke():
    drift = PiecewisePoly(
        breakpoints=(0.0, 0.5, 1.0),
        pieces=((0.0, 2.0), (1.0, -2.0)),
    )
    dyn = DiffusionSpec(drift=drift, volatility=PiecewisePoly.single((1.0,)))
    res = transform_game(ZS, dyn)
    assert res.checks.ok
    assert res.scale_map.strictly_increasing
    inv = res.inverse(res.forward(np.array([0.25, 0.75])))
    assert np.allclose(inv, [0.25, 0.75], atol=1e-8)


def test_dynamics_serialization_roundtrip():
    drift = PiecewisePoly(
        breakpoints=(0.0, 0.5, 1.0),
        pieces=((0.0, 2.0), (1.0, -2.0)),
    )
    dyn = DiffusionSpec(drift=drift, volatility=PiecewisePoly.single((2.0,)), x_lo=-1.0, x_hi=3.0)
    back = DiffusionSpec.from_dict(dyn.to_dict())
    zs = np.linspace(0.0, 1.0, 101)
    assert np.allclose(back.drift.piece_eval(zs), dyn.drift.piece_eval(zs))
    assert np.allclose(back.volatility.piece_eval(zs), dyn.volatility.piece_eval(zs))
    assert back.x_lo == -1.0 and back.x_hi == 3.0 and back.length == 4.0


def test_result_serializes(unit_drift):
    d = unit_drift.to_dict()
    assert set(d) == {"rate", "source_digest", "mapped_digest", "mapped_geometry", "checks"}
    assert d["rate"] == 0.0
    assert d["source_digest"] == ZS.digest()
    assert d["checks"]["ok"] is True
