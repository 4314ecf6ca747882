import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynkin_gnep import rewards
from dynkin_gnep.rewards import (
    GameSpec,
    PiecewisePoly,
    SpecFormatError,
    builtin_example,
    load_spec,
    normalize_boundary,
    save_spec,
    spec_from_dict,
    validate,
    validate_all,
)


def test_single_poly_matches_polyval():
    poly = PiecewisePoly.single((0.5, -1.0, 2.0, 0.25))
    xs = np.linspace(0.0, 1.0, 37)
    expected = 0.5 - xs + 2.0 * xs**2 + 0.25 * xs**3
    np.testing.assert_allclose(poly.piece_eval(xs), expected, rtol=0, atol=1e-14)


def test_piece_selection_right_continuous():
    pp = PiecewisePoly((0.0, 0.5, 1.0), ((0.0, 1.0), (0.5, -1.0)))
    assert pp.piece_eval(0.5) == 0.5
    assert pp.piece_eval(0.5 - 1e-12) == pytest.approx(0.5, abs=1e-11)
    assert pp.piece_eval(0.75) == pytest.approx(0.25)


def test_derivatives_match_finite_differences():
    poly = PiecewisePoly.single((0.0, 0.3, -1.2, 0.7, 0.1))
    h = 1e-6
    for x in (0.13, 0.41, 0.77):
        fd1 = (poly.piece_eval(x + h) - poly.piece_eval(x - h)) / (2 * h)
        assert poly.piece_eval(x, order=1) == pytest.approx(fd1, abs=1e-7)
        fd2 = (
            poly.piece_eval(x + h) - 2 * poly.piece_eval(x) + poly.piece_eval(x - h)
        ) / h**2
        assert poly.piece_eval(x, order=2) == pytest.approx(fd2, abs=1e-4)


def test_derivative_object_agrees_with_order_argument():
    pp = builtin_example("global_stable").f1
    d = pp.derivative()
    xs = np.linspace(0.0, 1.0, 101)
    np.testing.assert_allclose(d.piece_eval(xs), pp.piece_eval(xs, order=1), atol=1e-12)


def test_derivative_refuses_merely_continuous_functions():
    with pytest.raises(rewards.SmoothnessError):
        builtin_example("zero_sum").f1.derivative()


def test_declared_smoothness_is_verified():
    with pytest.raises(SpecFormatError):
        PiecewisePoly((0.0, 0.5, 1.0), ((0.0, 1.0), (0.9, -1.0)))
    with pytest.raises(SpecFormatError):
        # values match at the joint but slopes do not, so C1 must fail
        PiecewisePoly((0.0, 0.5, 1.0), ((0.0, 1.0), (0.5, -1.0)), smoothness=1)


def test_degree_cap():
    with pytest.raises(SpecFormatError):
        PiecewisePoly((0.0, 1.0), ((0.0, 1.0, 1.0, 1.0, 1.0, 1.0),))


def test_line_and_zero_helpers():
    line = PiecewisePoly.line(1.0, 3.0)
    assert line.piece_eval(0.0) == 1.0
    assert line.piece_eval(1.0) == 3.0
    assert line.piece_eval(0.25) == pytest.approx(1.5)
    assert PiecewisePoly.zero().piece_eval(0.7) == 0.0


@st.composite
def piecewise_polys(draw):
    n_pieces = draw(st.integers(min_value=1, max_value=4))
    interior = draw(
        st.lists(
            st.floats(min_value=0.05, max_value=0.95),
            min_size=n_pieces - 1,
            max_size=n_pieces - 1,
            unique=True,
        )
    )
    breaks = [0.0] + sorted(interior) + [1.0]
    coeff = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)
    pieces = []
    level = draw(coeff)
    for k in range(n_pieces):
        tail = draw(st.lists(coeff, min_size=0, max_size=3))
        piece = (level, *tail)
        pieces.append(piece)
        width = breaks[k + 1] - breaks[k]
        acc = 0.0
        for c in reversed(piece):
            acc = acc * width + c
        level = acc
    return PiecewisePoly(tuple(breaks), tuple(pieces))


@given(piecewise_polys())
@settings(max_examples=60, deadline=None)
def test_piecewise_eval_matches_direct_horner(pp):
    xs = np.linspace(0.0, 1.0, 41)
    got = pp.piece_eval(xs)
    for x, v in zip(xs, got):
        k = np.searchsorted(pp.breakpoints, x, side="right") - 1
        k = min(max(k, 0), len(pp.pieces) - 1)
        u = x - pp.breakpoints[k]
        acc = 0.0
        for c in reversed(pp.pieces[k]):
            acc = acc * u + c
        assert v == pytest.approx(acc, abs=1e-12)


@given(piecewise_polys())
@settings(max_examples=60, deadline=None)
def test_piecewise_dict_roundtrip(pp):
    again = PiecewisePoly.from_dict(json.loads(json.dumps(pp.to_dict())))
    assert again.breakpoints == pp.breakpoints
    assert again.pieces == pp.pieces
    assert again.smoothness == pp.smoothness


def test_spec_roundtrip_and_digest(tmp_path):
    spec = builtin_example("zero_sum")
    path = tmp_path / "spec.json"
    save_spec(spec, str(path))
    again = load_spec(str(path))
    assert again.digest() == spec.digest()
    assert spec.digest() == "943d2e68613eae23"
    assert again.geometry == spec.geometry


def test_digest_distinguishes_games():
    assert (
        builtin_example("zero_sum").digest()
        != builtin_example("global_stable").digest()
    )


def test_negative_discount_rejected():
    spec = builtin_example("zero_sum")
    with pytest.raises(SpecFormatError):
        GameSpec(
            f1=spec.f1, g1=spec.g1, h1=spec.h1,
            f2=spec.f2, g2=spec.g2, h2=spec.h2,
            geometry=spec.geometry, discount=-0.5,
        )


def test_load_rejects_nonvanishing_rewards(tmp_path):
    spec = builtin_example("zero_sum")
    data = spec.to_dict()
    data["rewards"]["g1"] = PiecewisePoly.line(0.2, 0.0).to_dict()
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(SpecFormatError):
        load_spec(str(path))


def test_load_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"geometry": ')
    with pytest.raises(SpecFormatError):
        load_spec(str(path))


def test_normalize_boundary_idempotent():
    spec = builtin_example("zero_sum")
    once = normalize_boundary(spec)
    twice = normalize_boundary(once)
    xs = np.linspace(0.0, 1.0, 101)
    for name in ("f1", "g1", "h1", "f2", "g2", "h2"):
        np.testing.assert_allclose(
            once.rewards()[name].piece_eval(xs),
            twice.rewards()[name].piece_eval(xs),
            atol=1e-14,
        )
    assert twice.boundary == (0.0, 0.0)


def test_spec_from_dict_matches_load(tmp_path):
    spec = builtin_example("global_stable")
    path = tmp_path / "s.json"
    save_spec(spec, str(path))
    assert spec_from_dict(json.loads(path.read_text())).digest() == spec.digest()


@pytest.mark.parametrize(
    "name,conditions",
    [
        ("zero_sum", ("A1", "A1p", "G1", "U")),
        ("nonzero_sum_gnep_zero", ("A1", "G1")),
        ("global_stable", ("A1", "G1", "G1p", "U")),
        ("local_only", ("A1", "G1", "G1p", "U")),
        ("g2_three_player", ("A1", "G2")),
    ],
)
def test_builtin_examples_pass_their_conditions(name, conditions):
    spec = builtin_example(name)
    for cond in conditions:
        report = validate(spec, cond)
        assert report.holds, f"{name} should satisfy {cond}: {report.witnesses[:1]}"


def test_zero_sum_fails_strict_smoothness_clause():
    # the kinked rewards are C0 only, so the C2 clause must produce witnesses
    report = validate(builtin_example("zero_sum"), "G1p")
    assert not report.holds
    assert any("C2" in w.clause for w in report.witnesses)


def _convex_left_spec():
    f1 = PiecewisePoly((0.0, 0.4, 1.0), ((0.0, -0.4, 1.0), (0.0, -0.6, 1.0)))
    g1 = PiecewisePoly((0.0, 1.0), ((0.0, 1.0, -1.0),), 2)
    f2 = PiecewisePoly((0.0, 1.0), ((0.0, -1.0, 1.0),), 2)
    g2 = PiecewisePoly((0.0, 0.4, 1.0), ((0.0, 0.4, -1.0), (0.0, 0.6, -1.0)))
    z = PiecewisePoly.zero()
    return GameSpec(f1=f1, g1=g1, h1=z, f2=f2, g2=g2, h2=z, geometry=(0.4, 0.6))


def test_concavity_violation_reports_witness():
    report = validate(_convex_left_spec(), "G1")
    assert not report.holds
    w = report.witnesses[0]
    assert "f1 concave" in w.clause
    assert 0.0 <= w.location[0] <= 0.4
    assert w.margin < 0


def test_validate_all_selects_conditions_by_geometry():
    flat = validate_all(builtin_example("zero_sum"))
    assert "G1" in flat and "G2" not in flat
    double = validate_all(builtin_example("g2_three_player"))
    assert "G2" in double and "G1" not in double


def test_ordering_violation_reports_location():
    spec = builtin_example("zero_sum")
    bumped = GameSpec(
        f1=spec.g1, g1=spec.f1, h1=spec.h1,   # swapped so f1 > g1 somewhere
        f2=spec.f2, g2=spec.g2, h2=spec.h2,
        geometry=spec.geometry,
    )
    report = validate(bumped, "A1")
    assert not report.holds
    assert report.witnesses[0].margin < 0


def test_unknown_example_name():
    with pytest.raises(SpecFormatError):
        builtin_example("does_not_exist")


def test_unknown_condition_name():
    with pytest.raises(ValueError):
        validate(builtin_example("zero_sum"), "Z9")
