"""Harmonic extensions, threshold payoff maps and exit probabilities.

Everything here is exact piecewise-polynomial algebra for the driving process
on (0,1): harmonic functions are straight lines, so restricting a reward to a
stopping region or writing the payoff of a pair of threshold rules only ever
splices line segments into existing piecewise polynomials.  Boundary rewards
are assumed normalized to zero (see ``rewards.normalize_boundary``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rewards import PiecewisePoly, SpecError

_EPS = 1e-12


class RegionError(SpecError):
    """Ill-formed stopping region."""


@dataclass(frozen=True)
class Region:
    """A stopping region: one of [0,x], [r,1] or an interior [l1,l2]."""

    kind: str  # "left" | "right" | "middle"
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.kind not in ("left", "right", "middle"):
            raise RegionError(f"unknown region kind {self.kind!r}")
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise RegionError(f"region [{self.lo}, {self.hi}] not inside [0,1]")

    def contains(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        return (arr >= self.lo - _EPS) & (arr <= self.hi + _EPS)


def left_region(x: float) -> Region:
    return Region("left", 0.0, float(x))


def right_region(r: float) -> Region:
    return Region("right", float(r), 1.0)


def middle_region(l1: float, l2: float) -> Region:
    l1, l2 = float(l1), float(l2)
    if l1 <= 0.0:
        raise RegionError(
            "interior region must have l1 > 0; use a left region for [0, l2]"
        )
    if l2 >= 1.0:
        raise RegionError(
            "interior region must have l2 < 1; use a right region for [l1, 1]"
        )
    return Region("middle", l1, l2)


# ---------------------------------------------------------------------------
# splicing helpers
# ---------------------------------------------------------------------------

def _slice_pieces(fn: PiecewisePoly, lo: float, hi: float):
    """Breakpoints and local pieces of fn restricted to [lo, hi]."""
    assert lo < hi
    bps = [lo]
    pieces = []
    for k, (x0, x1) in enumerate(zip(fn.breakpoints, fn.breakpoints[1:])):
        p_lo, p_hi = max(x0, lo), min(x1, hi)
        if p_hi - p_lo <= _EPS:
            continue
        pieces.append(fn.pieces[k] if p_lo == x0 else fn._local_coeffs(p_lo))
        bps.append(p_hi)
    bps[-1] = hi
    return bps, pieces


def _segment(x0: float, v0: float, x1: float, v1: float):
    """Local coefficients of the line through (x0,v0) and (x1,v1)."""
    return (v0, (v1 - v0) / (x1 - x0))


def _assemble(segments) -> PiecewisePoly:
    """Concatenate (breakpoints, pieces) fragments into one function."""
    bps: list[float] = []
    pieces = []
    for frag_bps, frag_pieces in segments:
        if not frag_pieces:
            continue
        if bps:
            if abs(bps[-1] - frag_bps[0]) > 1e-9:
                raise RegionError("internal: fragments do not abut")
            bps.extend(frag_bps[1:])
        else:
            bps.extend(frag_bps)
        pieces.extend(frag_pieces)
    probe = PiecewisePoly(bps, pieces, 0)
    return probe.with_smoothness(probe.detect_smoothness())


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def restrict(fn: PiecewisePoly, region: Region) -> PiecewisePoly:
    """Replace fn off the region by the harmonic extension of its trace.

    The result agrees with fn on the region and is linear to the boundary
    values 0 at 0 and 1 elsewhere, i.e. the payoff of being forced to wait
    until the process enters the region (or leaves the interval).
    """
    lo, hi = region.lo, region.hi
    segs = []
    if lo > _EPS:
        v = fn.piece_eval(lo)
        segs.append(([0.0, lo], [_segment(0.0, 0.0, lo, v)]))
    elif region.kind == "middle":
        raise RegionError("interior region touching 0 is not representable")
    if hi - lo > _EPS:
        segs.append(_slice_pieces(fn, max(lo, 0.0), min(hi, 1.0)))
    if hi < 1.0 - _EPS:
        v = fn.piece_eval(hi)
        segs.append(([hi, 1.0], [_segment(hi, v, 1.0, 0.0)]))
    if hi - lo <= _EPS and (lo <= _EPS or hi >= 1.0 - _EPS):
        # single point at the boundary: pure line to the boundary value
        v = fn.piece_eval(lo)
        return PiecewisePoly.single((v, -v) if lo <= _EPS else (0.0, v))
    return _assemble(segs)


def two_threshold_payoff(
    low_fn: PiecewisePoly,
    high_fn: PiecewisePoly,
    ell: float,
    r: float,
) -> PiecewisePoly:
    """Expected payoff of the rule pair (stop below at ell, stop above at r).

    Returns low_fn on [0, ell], high_fn on [r, 1] and the line through
    (ell, low_fn(ell)), (r, high_fn(r)) between, which is the exit
    decomposition of the payoff under the driving process.  For player 1 pass
    (f1, g1); for player 2 pass (g2, f2).  Requires ell < r.
    """
    if not ell < r:
        raise RegionError(f"need ell < r, got ell={ell:.6g}, r={r:.6g}")
    if ell < 0.0 or r > 1.0:
        raise RegionError("thresholds must lie in [0,1]")
    segs = []
    if ell > _EPS:
        segs.append(_slice_pieces(low_fn, 0.0, ell))
    v_lo = low_fn.piece_eval(max(ell, 0.0))
    v_hi = high_fn.piece_eval(min(r, 1.0))
    segs.append(([ell, r], [_segment(ell, v_lo, r, v_hi)]))
    if r < 1.0 - _EPS:
        segs.append(_slice_pieces(high_fn, r, 1.0))
    # clip outer endpoints to exactly 0 and 1
    segs[0] = ([0.0] + segs[0][0][1:], segs[0][1])
    segs[-1] = (segs[-1][0][:-1] + [1.0], segs[-1][1])
    return _assemble(segs)


def interval_threshold_payoff(
    inner_fn: PiecewisePoly,
    outer_fn: PiecewisePoly,
    l1: float,
    l2: float,
    r: float,
) -> PiecewisePoly:
    """Payoff when one player stops on [l1, l2] and the other above r.

    inner_fn is paid on [l1, l2], outer_fn on [r, 1]; the segments [0, l1]
    and [l2, r] are harmonic (linear), with value 0 at the left boundary.
    Requires 0 < l1 <= l2 < r.
    """
    if not 0.0 < l1 <= l2 < r <= 1.0:
        raise RegionError(
            f"need 0 < l1 <= l2 < r <= 1, got ({l1:.6g}, {l2:.6g}, {r:.6g})"
        )
    segs = [([0.0, l1], [_segment(0.0, 0.0, l1, inner_fn.piece_eval(l1))])]
    if l2 - l1 > _EPS:
        segs.append(_slice_pieces(inner_fn, l1, l2))
    segs.append(
        ([l2, r], [_segment(l2, inner_fn.piece_eval(l2), r, outer_fn.piece_eval(r))])
    )
    if r < 1.0 - _EPS:
        segs.append(_slice_pieces(outer_fn, r, 1.0))
        segs[-1] = (segs[-1][0][:-1] + [1.0], segs[-1][1])
    return _assemble(segs)


def hit_probability(x, ell: float, r: float):
    """Probability that the process started at x reaches ell before r.

    Scale-function identity for the driving process: (r - x)/(r - ell).
    Errors outside [ell, r] or for a degenerate bracket.
    """
    if not ell < r:
        raise RegionError(f"need ell < r, got ell={ell:.6g}, r={r:.6g}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < ell - _EPS) or np.any(arr > r + _EPS):
        raise RegionError(
            f"start point outside [{ell:.6g}, {r:.6g}]"
        )
    out = (r - arr) / (r - ell)
    return float(out) if out.ndim == 0 else out
