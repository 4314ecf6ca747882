"""Space transforms that reduce drifted, discounted diffusions to the core model.

The solver modules price threshold strategies under a driftless process on
[0,1], where the expected payoff of exiting a band interpolates linearly
between the rewards at its two edges.  This module maps a scalar diffusion
with drift, position dependent volatility and an exponential kill rate onto
that setting:

* zero kill rate: the state is pushed through the scale map built by
  integrating exp of minus the accumulated drift-to-variance ratio, which
  removes the drift and makes band-exit probabilities linear again;
* positive kill rate: two one-sided solutions of the eigenvalue equation
  (vol^2 / 2) w'' + drift w' = rate * w are marched from the two interval
  ends, the increasing one from the left and the decreasing one from the
  right.  Their ratio, affinely renormalized onto [0,1], replaces the scale
  map, and every reward is divided by the decreasing solution before being
  composed with the inverse map.

Rewards of the mapped game are refit as piecewise quartics to a sup error
below ``REFIT_TOL``, so downstream code sees an ordinary ``GameSpec`` with
zero discount.  Thresholds found for the source diffusion are certified by
mapping them forward and re-running the standard certificate on the mapped
game.

All marching uses fixed-step fourth order Runge-Kutta, halving the step until
the Richardson error estimate clears the requested tolerance; independent
finite-difference residuals of the defining equations are recorded so a bad
integration cannot pass silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import harmonic
from .rewards import (
    MATCH_TOL,
    DomainError,
    GameSpec,
    PiecewisePoly,
    REWARD_KEYS,
    SpecError,
    SpecFormatError,
)

MARCH_TOL = 1e-8      # Richardson estimate the step halving must reach
RESIDUAL_TOL = 1e-6   # finite-difference defect of the marched equations
REFIT_TOL = 1e-6      # sup error of the piecewise-quartic reward refit
ROUNDTRIP_TOL = 1e-8  # forward-then-inverse map error
VALUE_FLOOR = 1e-12   # smallest eigenfunction value we agree to divide by
MIN_STEPS = 64
MAX_STEPS = 1 << 16
INVERSE_GRID = 4096


class TransformError(SpecError):
    """Structural failure while building a reduction."""


class EigenUnderflowError(TransformError):
    """An eigenfunction left the range the reduction can divide by."""


# ---------------------------------------------------------------------------
# dynamics of the source process
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionSpec:
    """Dynamics of the source process, parameterized by normalized position.

    ``drift`` and ``volatility`` are piecewise polynomials on [0,1] read at
    z = (x - x_lo) / (x_hi - x_lo); they give the physical coefficients of
    the process at the matching point of [x_lo, x_hi].  ``vol_floor`` is the
    positive bound the volatility must clear everywhere, checked on a dense
    grid at construction.
    """

    drift: PiecewisePoly
    volatility: PiecewisePoly
    x_lo: float = 0.0
    x_hi: float = 1.0
    vol_floor: float = 1e-6

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_lo) and math.isfinite(self.x_hi)):
            raise SpecFormatError("interval endpoints must be finite")
        if not self.x_lo < self.x_hi:
            raise SpecFormatError("need x_lo < x_hi")
        if not self.vol_floor > 0.0:
            raise SpecFormatError("vol_floor must be positive")
        zs = np.union1d(np.linspace(0.0, 1.0, 4097), self.volatility.breakpoints)
        vals = self.volatility.piece_eval(zs)
        k = int(np.argmin(vals))
        if vals[k] < self.vol_floor:
            raise SpecFormatError(
                f"volatility {vals[k]:.3e} at z={zs[k]:.6g} is below the "
                f"floor {self.vol_floor:g}"
            )

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    def to_dict(self) -> dict:
        return {
            "drift": self.drift.to_dict(),
            "volatility": self.volatility.to_dict(),
            "x_lo": self.x_lo,
            "x_hi": self.x_hi,
            "vol_floor": self.vol_floor,
        }

    @staticmethod
    def from_dict(data: dict) -> "DiffusionSpec":
        try:
            drift = PiecewisePoly.from_dict(data["drift"])
            vol = PiecewisePoly.from_dict(data["volatility"])
        except (KeyError, TypeError) as exc:
            raise SpecFormatError(f"missing dynamics key: {exc}") from exc
        return DiffusionSpec(
            drift=drift,
            volatility=vol,
            x_lo=float(data.get("x_lo", 0.0)),
            x_hi=float(data.get("x_hi", 1.0)),
            vol_floor=float(data.get("vol_floor", 1e-6)),
        )


def constant_dynamics(
    drift: float = 0.0,
    volatility: float = 1.0,
    x_lo: float = 0.0,
    x_hi: float = 1.0,
) -> DiffusionSpec:
    """Constant-coefficient dynamics, the usual test bed."""
    return DiffusionSpec(
        drift=PiecewisePoly.single((float(drift),)),
        volatility=PiecewisePoly.single((float(volatility),)),
        x_lo=x_lo,
        x_hi=x_hi,
    )


# ---------------------------------------------------------------------------
# dense curve tables
# ---------------------------------------------------------------------------

class CurveTable:
    """Cubic Hermite interpolant through dense (node, value, slope) samples.

    The solver output arrives as values plus exact first derivatives on a
    fine grid; Hermite interpolation keeps both and evaluates in vectorized
    form.  Evaluation outside the node range by more than 1e-9 raises, closer
    points are clamped.
    """

    __slots__ = ("xs", "values", "slopes")

    def __init__(self, xs, values, slopes) -> None:
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        slopes = np.asarray(slopes, dtype=float)
        if xs.ndim != 1 or xs.size < 2:
            raise TransformError("a curve table needs at least two nodes")
        if values.shape != xs.shape or slopes.shape != xs.shape:
            raise TransformError("curve arrays must share one shape")
        if not np.all(np.diff(xs) > 0.0):
            raise TransformError("curve nodes must be strictly increasing")
        self.xs = xs
        self.values = values
        self.slopes = slopes

    def __call__(self, x, order: int = 0):
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        pts = np.atleast_1d(arr).astype(float)
        lo, hi = self.xs[0], self.xs[-1]
        if np.any(pts < lo - 1e-9) or np.any(pts > hi + 1e-9):
            bad = pts[(pts < lo - 1e-9) | (pts > hi + 1e-9)][0]
            raise DomainError(
                f"point {bad:.6g} outside the curve domain [{lo:g}, {hi:g}]"
            )
        pts = np.clip(pts, lo, hi)
        idx = np.clip(np.searchsorted(self.xs, pts, side="right") - 1, 0, self.xs.size - 2)
        h = self.xs[idx + 1] - self.xs[idx]
        t = (pts - self.xs[idx]) / h
        v0 = self.values[idx]
        v1 = self.values[idx + 1]
        d0 = self.slopes[idx] * h
        d1 = self.slopes[idx + 1] * h
        t2 = t * t
        if order == 0:
            t3 = t2 * t
            out = (
                (2.0 * t3 - 3.0 * t2 + 1.0) * v0
                + (t3 - 2.0 * t2 + t) * d0
                + (3.0 * t2 - 2.0 * t3) * v1
                + (t3 - t2) * d1
            )
        elif order == 1:
            out = (
                (6.0 * t2 - 6.0 * t) * v0
                + (3.0 * t2 - 4.0 * t + 1.0) * d0
                + (6.0 * t - 6.0 * t2) * v1
                + (3.0 * t2 - 2.0 * t) * d1
            ) / h
        else:
            raise ValueError("curve evaluation supports orders 0 and 1 only")
        if scalar:
            return float(out[0])
        return out.reshape(arr.shape)

    @property
    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.values) > 0.0))

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) < 0.0))


def _inverse_table(curve: CurveTable, grid: int = INVERSE_GRID) -> CurveTable:
    """Tabulated inverse of a strictly increasing curve."""
    zs = np.linspace(curve.xs[0], curve.xs[-1], grid + 1)
    u = curve(zs)
    du = curve(zs, order=1)
    if np.any(np.diff(u) <= 0.0) or np.any(du <= 0.0):
        raise TransformError("mapped scale is not strictly increasing on the fine grid")
    return CurveTable(u, zs, 1.0 / du)


# ---------------------------------------------------------------------------
# fixed-step marching with Richardson control
# ---------------------------------------------------------------------------

def _scale_pass(q: np.ndarray, h: float, n: int):
    """One RK4 pass for I' = q(z), S' = exp(-I), from (0, 0).

    ``q`` holds the coefficient on the half-step grid (2n+1 points); the
    quadrature for I collapses to Simpson because its slope ignores the
    state.
    """
    accum = np.empty(n + 1)
    scale = np.empty(n + 1)
    cur_i = 0.0
    cur_s = 0.0
    accum[0] = 0.0
    scale[0] = 0.0
    for i in range(n):
        q0 = q[2 * i]
        q1 = q[2 * i + 1]
        q2 = q[2 * i + 2]
        e1 = math.exp(-cur_i)
        e2 = math.exp(-(cur_i + 0.5 * h * q0))
        e3 = math.exp(-(cur_i + 0.5 * h * q1))
        e4 = math.exp(-(cur_i + h * q1))
        cur_i += h * (q0 + 4.0 * q1 + q2) / 6.0
        cur_s += h * (e1 + 2.0 * e2 + 2.0 * e3 + e4) / 6.0
        accum[i + 1] = cur_i
        scale[i + 1] = cur_s
    return accum, scale


def _march_scale(dyn: DiffusionSpec, tol: float):
    """Integrate the scale map over z in [0,1] to a Richardson estimate <= tol."""
    length = dyn.length
    n = MIN_STEPS
    prev = None
    while n <= MAX_STEPS:
        zs = np.linspace(0.0, 1.0, 2 * n + 1)
        vol2 = dyn.volatility.piece_eval(zs) ** 2
        q = 2.0 * length * dyn.drift.piece_eval(zs) / vol2
        accum, scale = _scale_pass(q, 1.0 / n, n)
        if prev is not None:
            shared = scale[::2]
            est = float(np.max(np.abs(shared - prev) / (1.0 + np.abs(shared)))) / 15.0
            if est <= tol:
                nodes = np.linspace(0.0, 1.0, n + 1)
                return nodes, scale, np.exp(-accum), n
        prev = scale
        n *= 2
    raise TransformError(
        f"scale integration still above {tol:g} after {MAX_STEPS} steps"
    )


def _eigen_pass(c1: np.ndarray, c2: np.ndarray, h: float, n: int, w0: float, p0: float):
    """One RK4 pass for w' = p, p' = c1(z) w + c2(z) p."""
    ws = np.empty(n + 1)
    ps = np.empty(n + 1)
    w, p = w0, p0
    ws[0] = w
    ps[0] = p
    for i in range(n):
        a0 = c1[2 * i]
        a1 = c1[2 * i + 1]
        a2 = c1[2 * i + 2]
        b0 = c2[2 * i]
        b1 = c2[2 * i + 1]
        b2 = c2[2 * i + 2]
        k1w = p
        k1p = a0 * w + b0 * p
        mw = w + 0.5 * h * k1w
        mp = p + 0.5 * h * k1p
        k2w = mp
        k2p = a1 * mw + b1 * mp
        mw = w + 0.5 * h * k2w
        mp = p + 0.5 * h * k2p
        k3w = mp
        k3p = a1 * mw + b1 * mp
        mw = w + h * k3w
        mp = p + h * k3p
        k4w = mp
        k4p = a2 * mw + b2 * mp
        w += h * (k1w + 2.0 * k2w + 2.0 * k3w + k4w) / 6.0
        p += h * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        if not (math.isfinite(w) and math.isfinite(p)):
            raise EigenUnderflowError(
                "eigenfunction overflow while marching; shrink the interval "
                "or the discount rate"
            )
        ws[i + 1] = w
        ps[i + 1] = p
    return ws, ps


def _march_eigen(dyn: DiffusionSpec, rate: float, side: str, tol: float):
    """March one eigenfunction of the killed generator across [0,1].

    ``side`` is "rising" (starts at z=0, increasing) or "falling" (starts at
    z=1, decreasing).  The initial slope is the stationary slope of the
    associated quadratic in the local constant-coefficient problem, which
    selects the wanted one-sided solution; monotonicity is then a property
    of the marched output and is verified by the caller.
    """
    length = dyn.length
    z0, z1 = (0.0, 1.0) if side == "rising" else (1.0, 0.0)
    mu0 = float(dyn.drift.piece_eval(z0))
    s0 = float(dyn.volatility.piece_eval(z0))
    root = math.sqrt(mu0 * mu0 + 2.0 * rate * s0 * s0)
    if side == "rising":
        slope = length * (-mu0 + root) / (s0 * s0)
    else:
        slope = -length * (mu0 + root) / (s0 * s0)
    n = MIN_STEPS
    prev = None
    while n <= MAX_STEPS:
        zs = np.linspace(z0, z1, 2 * n + 1)
        vol2 = dyn.volatility.piece_eval(zs) ** 2
        c1 = 2.0 * rate * length * length / vol2
        c2 = -2.0 * length * dyn.drift.piece_eval(zs) / vol2
        ws, ps = _eigen_pass(c1, c2, (z1 - z0) / n, n, 1.0, slope)
        if prev is not None:
            shared = ws[::2]
            est = float(np.max(np.abs(shared - prev) / (1.0 + np.abs(shared)))) / 15.0
            if est <= tol:
                nodes = np.linspace(z0, z1, n + 1)
                if side == "falling":
                    nodes = nodes[::-1].copy()
                    ws = ws[::-1].copy()
                    ps = ps[::-1].copy()
                return nodes, ws, ps, n
        prev = ws
        n *= 2
    raise TransformError(
        f"{side} eigenfunction still above {tol:g} after {MAX_STEPS} steps"
    )


# ---------------------------------------------------------------------------
# independent residuals of the marched equations
# ---------------------------------------------------------------------------

def _kink_mask(zs: np.ndarray, polys, width: float) -> np.ndarray:
    """Mask out nodes close to coefficient breakpoints, where second
    derivatives of the solution jump and the stencil is meaningless."""
    keep = np.ones(zs.size, dtype=bool)
    for poly in polys:
        for b in poly.breakpoints[1:-1]:
            keep &= np.abs(zs - b) > width
    return keep


def _fd_second(first: np.ndarray, h: float) -> np.ndarray:
    """Fourth order second derivative from exact first-derivative samples."""
    return (-first[4:] + 8.0 * first[3:-1] - 8.0 * first[1:-3] + first[:-4]) / (12.0 * h)


def _scale_residual(dyn: DiffusionSpec, zs, values, slopes) -> float:
    if zs.size < 7:
        return 0.0
    h = zs[1] - zs[0]
    inner = zs[2:-2]
    vol2 = dyn.volatility.piece_eval(inner) ** 2
    q = 2.0 * dyn.length * dyn.drift.piece_eval(inner) / vol2
    second = _fd_second(slopes, h)
    drift_term = q * slopes[2:-2]
    defect = np.abs(second + drift_term) / (1.0 + np.abs(drift_term))
    keep = _kink_mask(inner, (dyn.drift, dyn.volatility), 2.5 * h)
    return float(np.max(defect[keep])) if keep.any() else 0.0


def _eigen_residual(dyn: DiffusionSpec, rate: float, zs, ws, ps) -> float:
    if zs.size < 7:
        return 0.0
    h = zs[1] - zs[0]
    inner = zs[2:-2]
    vol2 = dyn.volatility.piece_eval(inner) ** 2
    length = dyn.length
    c1 = 2.0 * rate * length * length / vol2
    c2 = -2.0 * length * dyn.drift.piece_eval(inner) / vol2
    second = _fd_second(ps, h)
    target = c1 * ws[2:-2] + c2 * ps[2:-2]
    defect = np.abs(second - target) / (1.0 + np.abs(target))
    keep = _kink_mask(inner, (dyn.drift, dyn.volatility), 2.5 * h)
    return float(np.max(defect[keep])) if keep.any() else 0.0


# ---------------------------------------------------------------------------
# reward refit
# ---------------------------------------------------------------------------

_LOBATTO = 0.5 - 0.5 * np.cos(np.pi * np.arange(5) / 4.0)
_LOBATTO_VANDER = np.vander(_LOBATTO, 5, increasing=True)
_ERR_NODES = np.linspace(0.0, 1.0, 17)[1:-1]


def _fit_function(
    target: Callable[[np.ndarray], np.ndarray],
    seeds,
    tol: float,
    max_pieces: int = 4096,
    min_width: float = 1e-9,
) -> PiecewisePoly:
    """Adaptive piecewise-quartic fit of a continuous function on [0,1].

    Each candidate piece interpolates the target at five Lobatto nodes; the
    interior error is sampled and the piece is bisected until it clears the
    tolerance.  Both endpoints are interpolation nodes and endpoint values
    are shared between neighbours, so the assembled function is continuous
    to rounding.
    """
    pts = [0.0]
    for s in sorted(float(v) for v in seeds):
        if s <= pts[-1] + 1e-12 or s >= 1.0 - 1e-12:
            continue
        pts.append(s)
    pts.append(1.0)
    knots = np.asarray(pts)
    kvals = target(knots)
    stack = [
        (knots[i], knots[i + 1], float(kvals[i]), float(kvals[i + 1]))
        for i in range(knots.size - 2, -1, -1)
    ]
    segments: list[tuple[float, tuple[float, ...]]] = []
    while stack:
        u0, u1, v0, v1 = stack.pop()
        width = u1 - u0
        nodes = u0 + width * _LOBATTO
        node_vals = np.empty(5)
        node_vals[0] = v0
        node_vals[4] = v1
        node_vals[1:4] = target(nodes[1:4])
        coeffs = np.linalg.solve(_LOBATTO_VANDER, node_vals)
        fitted = np.polynomial.polynomial.polyval(_ERR_NODES, coeffs)
        actual = target(u0 + width * _ERR_NODES)
        err = float(np.max(np.abs(fitted - actual)))
        if err <= 0.8 * tol or width <= min_width:
            if err > tol:
                raise TransformError(
                    f"reward refit stalled at width {width:.3e} with error {err:.3e}"
                )
            local = tuple(coeffs[k] / width**k for k in range(5))
            segments.append((float(u0), local))
            continue
        if len(segments) + len(stack) + 2 > max_pieces:
            raise TransformError(
                f"reward refit needs more than {max_pieces} pieces to reach {tol:g}"
            )
        um = u0 + 0.5 * width
        vm = float(target(np.asarray([um]))[0])
        stack.append((um, u1, vm, v1))
        stack.append((u0, um, v0, vm))
    breaks = [seg[0] for seg in segments] + [1.0]
    pieces = [seg[1] for seg in segments]
    return PiecewisePoly(breaks, pieces, smoothness=0)


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class TransformChecks:
    """Every numerical safeguard of one reduction, with its tolerance."""

    march_tolerance: float
    residual_tolerance: float
    refit_tolerance: float
    roundtrip_tolerance: float
    scale_residual: float | None
    rising_residual: float | None
    falling_residual: float | None
    monotone: bool
    roundtrip_error: float
    refit_errors: dict[str, float]
    steps: dict[str, int]

    @property
    def ok(self) -> bool:
        residuals = [
            r
            for r in (self.scale_residual, self.rising_residual, self.falling_residual)
            if r is not None
        ]
        return (
            self.monotone
            and self.roundtrip_error <= self.roundtrip_tolerance
            and all(r <= self.residual_tolerance for r in residuals)
            and all(e <= self.refit_tolerance for e in self.refit_errors.values())
        )

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "monotone": self.monotone,
            "scale_residual": self.scale_residual,
            "rising_residual": self.rising_residual,
            "falling_residual": self.falling_residual,
            "residual_tolerance": self.residual_tolerance,
            "roundtrip_error": self.roundtrip_error,
            "roundtrip_tolerance": self.roundtrip_tolerance,
            "refit_errors": dict(self.refit_errors),
            "refit_tolerance": self.refit_tolerance,
            "march_tolerance": self.march_tolerance,
            "steps": dict(self.steps),
        }


@dataclass(frozen=True, eq=False)
class TransformResult:
    """A reduction of a diffusion game to the core unit-interval model.

    ``scale_map`` sends the normalized source position to the mapped state in
    [0,1]; ``inverse_map`` undoes it.  ``rising`` and ``falling`` are the two
    eigenfunctions when the kill rate is positive, None otherwise, and
    ``falling`` doubles as the multiplicative pull-back factor for values.
    """

    dynamics: DiffusionSpec
    source: GameSpec
    game: GameSpec
    rate: float
    scale_map: CurveTable
    inverse_map: CurveTable
    rising: CurveTable | None
    falling: CurveTable | None
    checks: TransformChecks

    def forward(self, z):
        return self.scale_map(z)

    def inverse(self, u):
        return self.inverse_map(u)

    def discount_factor(self, z):
        """Value multiplier that undoes the reward division at position z."""
        if self.falling is None:
            arr = np.asarray(z, dtype=float)
            return 1.0 if arr.ndim == 0 else np.ones_like(arr)
        return self.falling(z)

    def map_thresholds(self, lower: float, upper: float) -> tuple[float, float]:
        return float(self.forward(lower)), float(self.forward(upper))

    def unmap_thresholds(self, lower: float, upper: float) -> tuple[float, float]:
        return float(self.inverse(lower)), float(self.inverse(upper))

    def pull_back_payoffs(self, z0: float, lower: float, upper: float) -> tuple[float, float]:
        """Discounted source-game payoffs of a threshold pair from z0.

        Player 1 stops at ``lower``, player 2 at ``upper``; both are given in
        the normalized source coordinate.  The payoff maps of the mapped game
        are evaluated at the mapped start and multiplied back by the falling
        eigenfunction.
        """
        low_u, up_u = self.map_thresholds(lower, upper)
        start_u = float(self.forward(z0))
        map1 = harmonic.two_threshold_payoff(self.game.f1, self.game.g1, low_u, up_u)
        map2 = harmonic.two_threshold_payoff(self.game.g2, self.game.f2, low_u, up_u)
        factor = float(self.discount_factor(z0)) if self.falling is not None else 1.0
        return (
            factor * float(map1.piece_eval(start_u)),
            factor * float(map2.piece_eval(start_u)),
        )

    def certify_thresholds(self, lower: float, upper: float, **kwargs):
        """Certify a source-coordinate threshold pair on the mapped game."""
        from . import equilibrium

        low_u, up_u = self.map_thresholds(lower, upper)
        return equilibrium.certify_threshold(self.game, low_u, up_u, **kwargs)

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "source_digest": self.source.digest(),
            "mapped_digest": self.game.digest(),
            "mapped_geometry": list(self.game.geometry),
            "checks": self.checks.to_dict(),
        }


# ---------------------------------------------------------------------------
# the reduction itself
# ---------------------------------------------------------------------------

def _require_reducible(game: GameSpec) -> None:
    if abs(game.boundary[0]) > MATCH_TOL or abs(game.boundary[1]) > MATCH_TOL:
        raise TransformError(
            "boundary rewards must be normalized away before transforming; "
            "run normalize_boundary first"
        )
    for name, fn in game.rewards().items():
        for endpoint in (0.0, 1.0):
            value = float(fn.piece_eval(endpoint))
            if abs(value) > MATCH_TOL:
                raise TransformError(
                    f"reward {name} must vanish at {endpoint:g} to transform "
                    f"(value {value:.3e})"
                )


def transform_game(
    game: GameSpec,
    dynamics: DiffusionSpec,
    *,
    march_tol: float = MARCH_TOL,
    refit_tol: float = REFIT_TOL,
) -> TransformResult:
    """Reduce a diffusion game to a driftless undiscounted one on [0,1].

    The kill rate is read from ``game.discount``.  Raises ``TransformError``
    when the reduction cannot be built at all (non-monotone map, eigenfunction
    under- or overflow, refit blowup); softer numerical evidence lands in the
    returned ``checks`` and is judged by its ``ok`` property.
    """
    _require_reducible(game)
    rate = float(game.discount)
    steps: dict[str, int] = {}

    if rate == 0.0:
        nodes, raw, raw_slopes, n = _march_scale(dynamics, march_tol)
        total = float(raw[-1])
        if not total > 0.0:
            raise TransformError("scale map has nonpositive total mass")
        values = raw / total
        slopes = raw_slopes / total
        values[0] = 0.0
        values[-1] = 1.0
        steps["scale"] = n
        rising = falling = None
        scale_residual = _scale_residual(dynamics, nodes, values, slopes)
        rising_residual = falling_residual = None
    else:
        r_nodes, r_vals, r_slopes, n_r = _march_eigen(dynamics, rate, "rising", march_tol)
        f_nodes, f_vals, f_slopes, n_f = _march_eigen(dynamics, rate, "falling", march_tol)
        steps["rising"] = n_r
        steps["falling"] = n_f
        if np.any(r_slopes <= 0.0):
            raise TransformError("rising eigenfunction is not strictly increasing")
        if np.any(f_slopes >= 0.0):
            raise TransformError("falling eigenfunction is not strictly decreasing")
        if float(np.min(r_vals)) < VALUE_FLOOR or float(np.min(f_vals)) < VALUE_FLOOR:
            raise EigenUnderflowError(
                f"eigenfunction drops below the {VALUE_FLOOR:g} floor; shrink "
                "the interval or the discount rate"
            )
        rising = CurveTable(r_nodes, r_vals, r_slopes)
        falling = CurveTable(f_nodes, f_vals, f_slopes)
        rising_residual = _eigen_residual(dynamics, rate, r_nodes, r_vals, r_slopes)
        falling_residual = _eigen_residual(dynamics, rate, f_nodes, f_vals, f_slopes)
        scale_residual = None
        fall_at = falling(r_nodes)
        fall_slope_at = falling(r_nodes, order=1)
        ratio = r_vals / fall_at
        ratio_slope = (r_slopes * fall_at - r_vals * fall_slope_at) / (fall_at * fall_at)
        span = float(ratio[-1] - ratio[0])
        if not span > 0.0:
            raise TransformError("eigenfunction ratio is not increasing")
        nodes = r_nodes
        values = (ratio - ratio[0]) / span
        slopes = ratio_slope / span
        values[0] = 0.0
        values[-1] = 1.0

    if np.any(np.diff(values) <= 0.0) or np.any(slopes <= 0.0):
        raise TransformError("mapped scale is not strictly increasing")
    scale_map = CurveTable(nodes, values, slopes)
    inverse_map = _inverse_table(scale_map)

    grid = np.linspace(0.0, 1.0, 4097)
    roundtrip = float(np.max(np.abs(inverse_map(scale_map(grid)) - grid)))

    kink_images = [
        float(scale_map(b))
        for poly in (dynamics.drift, dynamics.volatility)
        for b in poly.breakpoints[1:-1]
    ]
    mapped_geometry = tuple(float(scale_map(g)) for g in game.geometry)

    def make_target(fn: PiecewisePoly):
        def target(u):
            z = inverse_map(np.asarray(u, dtype=float))
            out = fn.piece_eval(z)
            if falling is not None:
                out = out / falling(z)
            return out

        return target

    refit_errors: dict[str, float] = {}
    mapped_rewards: dict[str, PiecewisePoly] = {}
    for name in REWARD_KEYS:
        fn = getattr(game, name)
        seeds = (
            [float(scale_map(b)) for b in fn.breakpoints[1:-1]]
            + kink_images
            + list(mapped_geometry)
        )
        target = make_target(fn)
        poly = _fit_function(target, seeds, refit_tol)
        dense = np.union1d(grid, poly.breakpoints)
        refit_errors[name] = float(
            np.max(np.abs(poly.piece_eval(dense) - target(dense)))
        )
        mapped_rewards[name] = poly

    mapped = GameSpec(
        geometry=mapped_geometry,
        boundary=(0.0, 0.0),
        discount=0.0,
        **mapped_rewards,
    )
    checks = TransformChecks(
        march_tolerance=march_tol,
        residual_tolerance=RESIDUAL_TOL,
        refit_tolerance=refit_tol,
        roundtrip_tolerance=ROUNDTRIP_TOL,
        scale_residual=scale_residual,
        rising_residual=rising_residual,
        falling_residual=falling_residual,
        monotone=scale_map.strictly_increasing,
        roundtrip_error=roundtrip,
        refit_errors=refit_errors,
        steps=steps,
    )
    return TransformResult(
        dynamics=dynamics,
        source=game,
        game=mapped,
        rate=rate,
        scale_map=scale_map,
        inverse_map=inverse_map,
        rising=rising,
        falling=falling,
        checks=checks,
    )
