"""Auxiliary utilities over threshold strategies and their best responses.

A pair of threshold rules (stop below x, stop above y) induces for each
player a ratio utility: the excess of the own stopping reward over the
harmonic extension of the opponent's reward, divided by the gap y - x.
Maximizing these utilities over the feasible sections is equivalent to best
responding in the stopping game, which is what the solver iterates on.

Utilities are minus infinity off the half-plane x < y.  That variant is kept
explicit here: evaluators raise ``InfeasibleError`` instead of returning a
float sentinel, and the optimizers never leave the feasible section.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rewards import GameSpec, SpecError

GOLDEN_GRID = 512
GOLDEN_TOL = 1e-10
NEWTON_CURVATURE_FLOOR = 1e-8
TIE_TOL = 1e-12


class InfeasibleError(SpecError):
    """Utility requested outside the x < y half-plane (value minus infinity)."""


@dataclass(frozen=True)
class BestResponse:
    point: float
    value: float
    tied: bool = False
    iterations: int = 0


def _ratio_partials(F, Fx, Fy, Fxx, Fyy, Fxy, d):
    """All partials of U = F/(y-x) from the partials of the numerator."""
    u = F / d
    ux = (Fx * d + F) / d**2
    uy = (Fy * d - F) / d**2
    uxx = (Fxx * d * d + 2.0 * (Fx * d + F)) / d**3
    uyy = (Fyy * d * d - 2.0 * (Fy * d - F)) / d**3
    uxy = (Fxy * d * d + (Fy - Fx) * d - 2.0 * F) / d**3
    return u, ux, uy, uxx, uyy, uxy


# ---------------------------------------------------------------------------
# scalar maximization: grid bracket, golden section, optional Newton polish
# ---------------------------------------------------------------------------

def maximize_section(
    value: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    d1: Callable[[float], float] | None = None,
    d2: Callable[[float], float] | None = None,
    grid: int = GOLDEN_GRID,
    tol: float = GOLDEN_TOL,
) -> BestResponse:
    """Maximize a unimodal-ish section over [lo, hi].

    A dense grid locates the bracket (ties resolved toward the smallest
    maximizer and flagged), golden-section search narrows it to ``tol``, and
    a Newton polish on the stationarity condition runs when second-derivative
    information is available and bounded away from zero.
    """
    if hi <= lo:
        return BestResponse(point=lo, value=float(value(np.asarray([lo]))[0]))
    xs = np.linspace(lo, hi, grid)
    vals = np.asarray(value(xs), dtype=float)
    v_best = float(np.max(vals))
    near = np.flatnonzero(vals >= v_best - TIE_TOL * (1.0 + abs(v_best)))
    tied = bool(near.size > 1 and int(near[-1]) - int(near[0]) > 1)
    i = int(near[0])
    b_lo = xs[max(i - 1, 0)]
    b_hi = xs[min(i + 1, grid - 1)]

    # Newton on stationarity straight from the grid maximizer; for the smooth
    # interior case this replaces the whole golden-section phase
    if d1 is not None and d2 is not None and 0 < i < grid - 1:
        x_n = float(xs[i])
        iters = 0
        settled = False
        for _ in range(12):
            c = d2(x_n)
            if not c < -NEWTON_CURVATURE_FLOOR:
                break
            step = d1(x_n) / c
            x_new = x_n - step
            iters += 1
            if not b_lo <= x_new <= b_hi:
                break
            x_n = x_new
            if abs(step) < max(tol * 1e-2, 1e-14):
                settled = True
                break
        if settled:
            v_n = float(value(np.asarray([x_n]))[0])
            if v_n >= v_best - TIE_TOL * (1.0 + abs(v_best)):
                return BestResponse(point=x_n, value=v_n, tied=tied, iterations=iters)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a_, b_ = b_lo, b_hi
    c_ = b_ - invphi * (b_ - a_)
    d_ = a_ + invphi * (b_ - a_)
    fc = float(value(np.asarray([c_]))[0])
    fd = float(value(np.asarray([d_]))[0])
    iters = 0
    while b_ - a_ > tol:
        if fc >= fd:
            b_, d_, fd = d_, c_, fc
            c_ = b_ - invphi * (b_ - a_)
            fc = float(value(np.asarray([c_]))[0])
        else:
            a_, c_, fc = c_, d_, fd
            d_ = a_ + invphi * (b_ - a_)
            fd = float(value(np.asarray([d_]))[0])
        iters += 1
        if iters > 200:
            break
    x_star = 0.5 * (a_ + b_)

    interior = lo + 10 * tol < x_star < hi - 10 * tol
    if interior and d1 is not None and d2 is not None:
        curv = d2(x_star)
        if abs(curv) > NEWTON_CURVATURE_FLOOR:
            x_n = x_star
            for _ in range(8):
                g = d1(x_n)
                c = d2(x_n)
                if abs(c) <= NEWTON_CURVATURE_FLOOR:
                    break
                step = g / c
                x_new = x_n - step
                if not b_lo <= x_new <= b_hi:
                    break
                x_n = x_new
                iters += 1
                if abs(step) < 1e-15:
                    break
            if b_lo <= x_n <= b_hi and d2(x_n) < 0:
                x_star = x_n
    v_star = float(value(np.asarray([x_star]))[0])
    return BestResponse(point=float(x_star), value=v_star, tied=tied, iterations=iters)


# ---------------------------------------------------------------------------
# two-player game
# ---------------------------------------------------------------------------


class ThresholdGame:
    """Utilities and best responses for the single-threshold game."""

    def __init__(self, spec: GameSpec) -> None:
        if spec.two_interval:
            raise SpecError("two-interval spec passed to the single-threshold game")
        self.spec = spec
        self.a = spec.a
        self.b = spec.b

    # feasible sections
    def section1(self, y: float) -> tuple[float, float]:
        """Player 1 chooses x in [0, min(a, y))."""
        return 0.0, min(self.a, y)

    def section2(self, x: float) -> tuple[float, float]:
        """Player 2 chooses y in (max(b, x), 1]."""
        return max(self.b, x), 1.0

    # numerators F_i and their partials
    def _num1(self, x, y: float):
        s = self.spec
        gy = s.g1.piece_eval(y)
        return s.f1.piece_eval(x) - gy * np.asarray(x) / y

    def _num2(self, x: float, y):
        s = self.spec
        gx = s.g2.piece_eval(x)
        return s.f2.piece_eval(y) - gx * (1.0 - np.asarray(y)) / (1.0 - x)

    @staticmethod
    def _require_gap(x, y) -> np.ndarray:
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if np.any(d <= 0):
            raise InfeasibleError("utility requested at x >= y")
        return d

    def utility1(self, x, y: float):
        """U1(x, y) for x < y (scalar or array x)."""
        d = self._require_gap(x, y)
        out = self._num1(x, y) / d
        return float(out) if out.ndim == 0 else out

    def utility2(self, x: float, y):
        """U2(x, y) for x < y (scalar or array y)."""
        d = self._require_gap(x, y)
        out = self._num2(x, y) / d
        return float(out) if out.ndim == 0 else out

    def partials1(self, x: float, y: float):
        """(U1, dU1/dx, d2U1/dx2, d2U1/dxdy) at a feasible point."""
        d = float(self._require_gap(x, y))
        s = self.spec
        gy = s.g1.piece_eval(y)
        gyp = s.g1.piece_eval(y, 1)
        F = s.f1.piece_eval(x) - gy * x / y
        Fx = s.f1.piece_eval(x, 1) - gy / y
        Fxx = s.f1.piece_eval(x, 2)
        Fy = -x * (gyp * y - gy) / y**2
        Fxy = -(gyp * y - gy) / y**2
        u, ux, _, uxx, _, uxy = _ratio_partials(F, Fx, Fy, Fxx, 0.0, Fxy, d)
        return u, ux, uxx, uxy

    def partials2(self, x: float, y: float):
        """(U2, dU2/dy, d2U2/dy2, d2U2/dxdy) at a feasible point."""
        d = float(self._require_gap(x, y))
        s = self.spec
        gx = s.g2.piece_eval(x)
        gxp = s.g2.piece_eval(x, 1)
        F = s.f2.piece_eval(y) - gx * (1.0 - y) / (1.0 - x)
        Fy = s.f2.piece_eval(y, 1) + gx / (1.0 - x)
        Fyy = s.f2.piece_eval(y, 2)
        # d/dx of g2(x)/(1-x) enters both cross terms
        q = (gxp * (1.0 - x) + gx) / (1.0 - x) ** 2
        Fx = -q * (1.0 - y)
        Fxy = q
        u, _, uy, _, uyy, uxy = _ratio_partials(F, Fx, Fy, 0.0, Fyy, Fxy, d)
        return u, uy, uyy, uxy

    # best responses
    def best_response1(self, y: float, grid: int = GOLDEN_GRID, tol: float = GOLDEN_TOL) -> BestResponse:
        lo, hi = self.section1(y)
        hi = min(hi, y - 1e-12)

        def val(xs: np.ndarray) -> np.ndarray:
            return np.asarray(self._num1(xs, y)) / (y - xs)

        return maximize_section(
            val, lo, hi,
            d1=lambda x: self.partials1(x, y)[1],
            d2=lambda x: self.partials1(x, y)[2],
            grid=grid, tol=tol,
        )

    def best_response2(self, x: float, grid: int = GOLDEN_GRID, tol: float = GOLDEN_TOL) -> BestResponse:
        lo, hi = self.section2(x)
        lo = max(lo, x + 1e-12)

        def val(ys: np.ndarray) -> np.ndarray:
            return np.asarray(self._num2(x, ys)) / (ys - x)

        return maximize_section(
            val, lo, hi,
            d1=lambda y: self.partials2(x, y)[1],
            d2=lambda y: self.partials2(x, y)[2],
            grid=grid, tol=tol,
        )


# ---------------------------------------------------------------------------
# three-player game on a double interval
# ---------------------------------------------------------------------------


class IntervalGame:
    """Utilities for the three-player reformulation of the double-interval game.

    Player 1 picks the lower edge x of the middle stopping interval, player 2
    its upper edge y, player 3 the right threshold z.  Players 1 and 2 share
    the first reward pair; player 3 plays the original second player.
    """

    def __init__(self, spec: GameSpec) -> None:
        if not spec.two_interval:
            raise SpecError("expected a two-interval geometry (a1, a2, b)")
        self.spec = spec
        self.a1, self.a2, self.b = spec.geometry

    def section1(self, y: float) -> tuple[float, float]:
        return self.a1, min(self.a2, y)

    def section2(self, x: float) -> tuple[float, float]:
        return max(self.a1, x), self.a2

    def section3(self) -> tuple[float, float]:
        return self.b, 1.0

    def utility1(self, x, z: float):
        """(f1(x) - g1(z) x / z) / x, extended by its limit at x = 0."""
        s = self.spec
        gz = s.g1.piece_eval(z)
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        flat = np.atleast_1d(arr)
        out = np.empty_like(flat)
        zero = flat <= 1e-14
        out[zero] = s.f1.piece_eval(0.0, 1) - gz / z
        nz = ~zero
        out[nz] = (s.f1.piece_eval(flat[nz]) - gz * flat[nz] / z) / flat[nz]
        return float(out[0]) if scalar else out.reshape(arr.shape)

    def utility2(self, y, z: float):
        s = self.spec
        gz = s.g1.piece_eval(z)
        d = np.asarray(z, dtype=float) - np.asarray(y, dtype=float)
        if np.any(d <= 0):
            raise InfeasibleError("utility requested at y >= z")
        out = (s.f1.piece_eval(y) - gz * np.asarray(y) / z) / d
        return float(out) if np.ndim(out) == 0 else out

    def utility3(self, y: float, z):
        s = self.spec
        d = np.asarray(z, dtype=float) - y
        if np.any(d <= 0):
            raise InfeasibleError("utility requested at z <= y")
        gy = s.g2.piece_eval(y)
        out = (s.f2.piece_eval(z) - gy * (1.0 - np.asarray(z)) / (1.0 - y)) / d
        return float(out) if np.ndim(out) == 0 else out

    # own-coordinate derivative pairs feeding the Newton polish; the constant
    # g1(z)/z offset in utility1 drops out of both derivatives
    def derivatives1(self, x: float, z: float) -> tuple[float, float]:
        s = self.spec
        f = s.f1.piece_eval(x)
        fp = s.f1.piece_eval(x, 1)
        fpp = s.f1.piece_eval(x, 2)
        return fp / x - f / x**2, fpp / x - 2.0 * fp / x**2 + 2.0 * f / x**3

    def derivatives2(self, y: float, z: float) -> tuple[float, float]:
        s = self.spec
        d = z - y
        F = s.f1.piece_eval(y) - s.g1.piece_eval(z) * y / z
        Fp = s.f1.piece_eval(y, 1) - s.g1.piece_eval(z) / z
        Fpp = s.f1.piece_eval(y, 2)
        return Fp / d + F / d**2, Fpp / d + 2.0 * Fp / d**2 + 2.0 * F / d**3

    def derivatives3(self, y: float, z: float) -> tuple[float, float]:
        s = self.spec
        d = z - y
        G = s.f2.piece_eval(z) - s.g2.piece_eval(y) * (1.0 - z) / (1.0 - y)
        Gp = s.f2.piece_eval(z, 1) + s.g2.piece_eval(y) / (1.0 - y)
        Gpp = s.f2.piece_eval(z, 2)
        return Gp / d - G / d**2, Gpp / d - 2.0 * Gp / d**2 + 2.0 * G / d**3

    def best_response1(self, y: float, z: float, grid: int = GOLDEN_GRID) -> BestResponse:
        lo, hi = self.section1(y)
        return maximize_section(
            lambda xs: np.asarray(self.utility1(xs, z)), lo, hi,
            d1=lambda x: self.derivatives1(x, z)[0],
            d2=lambda x: self.derivatives1(x, z)[1],
            grid=grid,
        )

    def best_response2(self, x: float, z: float, grid: int = GOLDEN_GRID) -> BestResponse:
        lo, hi = self.section2(x)
        hi = min(hi, z - 1e-12)
        return maximize_section(
            lambda ys: np.asarray(self.utility2(ys, z)), lo, hi,
            d1=lambda y: self.derivatives2(y, z)[0],
            d2=lambda y: self.derivatives2(y, z)[1],
            grid=grid,
        )

    def best_response3(self, x: float, y: float, grid: int = GOLDEN_GRID) -> BestResponse:
        lo, hi = self.section3()
        lo = max(lo, y + 1e-12)
        return maximize_section(
            lambda zs: np.asarray(self.utility3(y, zs)), lo, hi,
            d1=lambda z: self.derivatives3(y, z)[0],
            d2=lambda z: self.derivatives3(y, z)[1],
            grid=grid,
        )
