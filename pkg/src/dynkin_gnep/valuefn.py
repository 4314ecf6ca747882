"""Optimal stopping against a fixed opponent rule, via concave majorants.

With the opponent frozen at a threshold rule, each player faces a one-sided
stopping problem whose value is the harmonic restriction of the opponent's
reward plus the smallest nonnegative concave majorant of the excess obstacle
(own stopping reward minus that restriction) on the sub-interval where the
opponent has not yet acted.  For the driving process the majorant is the
upper concave hull of the obstacle graph, so the solver below is exact up to
grid resolution, with contact edges polished by tangency root-solving and
confirmed by grid doubling.

This route never evaluates the auxiliary ratio utilities; the equilibrium
module uses it as an independent cross-check of the best-response algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import harmonic
from .rewards import GameSpec, PiecewisePoly, SpecError

DEFAULT_GRID = 4096
REFINE_TOL = 1e-7
CONTACT_RTOL = 1e-9
MAX_GRID = 1 << 17


class StoppingError(SpecError):
    """Ill-posed auxiliary stopping problem."""


def upper_concave_hull(xs: np.ndarray, vs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest concave function through the graph (xs, vs), sampled on xs.

    Monotone-chain upper hull in one left-to-right pass; returns the hull
    values on xs and the indices of the hull vertices.  Endpoints are always
    vertices.  xs must be strictly increasing.
    """
    n = xs.size
    if n != vs.size or n < 2:
        raise StoppingError("hull needs two aligned samples at least")
    stack = [0]
    for i in range(1, n):
        while len(stack) >= 2:
            j, k = stack[-2], stack[-1]
            cross = (xs[k] - xs[j]) * (vs[i] - vs[j]) - (xs[i] - xs[j]) * (vs[k] - vs[j])
            if cross >= 0.0:  # middle vertex on or below the chord: drop it
                stack.pop()
            else:
                break
        stack.append(i)
    idx = np.asarray(stack)
    hull = np.interp(xs, xs[idx], vs[idx])
    # exact at vertices regardless of interp roundoff
    hull[idx] = vs[idx]
    return hull, idx


@dataclass(frozen=True)
class StopSolution:
    """Auxiliary stopping problem solved on [lo, hi].

    ``value`` is the majorant of the clamped obstacle on the grid ``xs``;
    the player's full value on [0,1] is ``base`` plus this excess (zero
    outside [lo, hi]).  ``contact`` holds the polished maximal intervals
    where the value meets the raw obstacle, sub-interval endpoints excluded.
    ``threshold`` is the headline contact edge for the calling problem.
    """

    lo: float
    hi: float
    xs: np.ndarray = field(repr=False)
    obstacle: np.ndarray = field(repr=False)
    value: np.ndarray = field(repr=False)
    contact: tuple[tuple[float, float], ...]
    threshold: float | None
    base: PiecewisePoly = field(repr=False)
    obstacle_fn: PiecewisePoly = field(repr=False)
    grid_size: int = 0
    refinements: int = 0
    converged: bool = True

    def aux_value(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        out = np.interp(np.clip(arr, self.lo, self.hi), self.xs, self.value)
        out = np.where((arr < self.lo - 1e-12) | (arr > self.hi + 1e-12), 0.0, out)
        return float(out) if out.ndim == 0 else out

    def full_value(self, x):
        arr = np.asarray(x, dtype=float)
        out = self.base.piece_eval(arr) + self.aux_value(arr)
        return float(out) if np.ndim(out) == 0 else out

    def contact_mask(self) -> np.ndarray:
        gap = self.value - self.obstacle
        return gap <= CONTACT_RTOL * (1.0 + np.abs(self.obstacle))


def _contact_runs(xs: np.ndarray, mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal index runs of the mask, strict interior of the grid only."""
    inner = mask.copy()
    inner[0] = inner[-1] = False
    runs = []
    start = None
    for i, m in enumerate(inner):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(inner) - 1))
    return runs


def _polish_edge(
    obstacle: PiecewisePoly,
    anchor: float,
    guess: float,
    lo: float,
    hi: float,
) -> float:
    """Root of the tangency condition through (anchor, 0) near guess.

    The hull leaves the obstacle along the line to the anchor point, so the
    edge satisfies phi'(t)(anchor - t) + phi(t) = 0.  Newton from the grid
    estimate with a bisection fallback on [lo, hi]; returns the guess when no
    sign change is found (kinked obstacles legitimately pin the edge).
    """

    def foc(t: float) -> float:
        return obstacle.piece_eval(t, 1) * (anchor - t) + obstacle.piece_eval(t)

    t = guess
    for _ in range(30):
        f = foc(t)
        df = obstacle.piece_eval(t, 2) * (anchor - t)
        if abs(df) < 1e-14:
            break
        step = f / df
        t_new = t - step
        if not lo <= t_new <= hi:
            break
        t = t_new
        if abs(step) < 1e-15:
            return t
    f_lo, f_hi = foc(lo), foc(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi < 0.0:
        a_, b_ = lo, hi
        for _ in range(100):
            m = 0.5 * (a_ + b_)
            fm = foc(m)
            if fm == 0.0 or b_ - a_ < 1e-15:
                return m
            if f_lo * fm < 0.0:
                b_ = m
            else:
                a_, f_lo = m, fm
        return 0.5 * (a_ + b_)
    return guess


def solve_auxiliary(
    obstacle: PiecewisePoly,
    base: PiecewisePoly,
    lo: float,
    hi: float,
    grid: int = DEFAULT_GRID,
    refine_tol: float = REFINE_TOL,
) -> StopSolution:
    """Majorant solve on [lo, hi] with grid doubling and edge polishing.

    The resolution doubles until the sup of the polished contact edges moves
    by less than ``refine_tol`` between rounds (at least two rounds run).
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise StoppingError(f"bad auxiliary interval [{lo:.6g}, {hi:.6g}]")
    n = max(grid, 16)
    prev_edges: tuple[float, ...] | None = None
    refinements = 0
    converged = True
    while True:
        xs = np.linspace(lo, hi, n)
        obs = obstacle.piece_eval(xs)
        clamped = np.maximum(obs, 0.0)
        value, _ = upper_concave_hull(xs, clamped)
        gap = value - obs
        mask = gap <= CONTACT_RTOL * (1.0 + np.abs(obs))
        runs = _contact_runs(xs, mask)
        h = (hi - lo) / (n - 1)
        edges = []
        intervals = []
        for ri, (i0, i1) in enumerate(runs):
            left = xs[i0]
            right = xs[i1]
            # Only the outermost edges are tangent to lines anchored at the
            # sub-interval ends; polish those, snap boundary-touching ones.
            if ri == 0:
                if i0 <= 1 and mask[0]:
                    left = lo
                elif i0 > 1:
                    left = _polish_edge(
                        obstacle, lo, left,
                        max(lo, left - 2 * h), min(right, left + 2 * h),
                    )
            if ri == len(runs) - 1:
                if i1 >= n - 2 and mask[-1]:
                    right = hi
                elif i1 < n - 2:
                    right = _polish_edge(
                        obstacle, hi, right,
                        max(left, right - 2 * h), min(hi, right + 2 * h),
                    )
            intervals.append((float(left), float(right)))
            edges.extend([float(left), float(right)])
        key = tuple(edges)
        if prev_edges is not None and len(prev_edges) == len(key):
            move = max((abs(p - q) for p, q in zip(prev_edges, key)), default=0.0)
            if move < refine_tol:
                break
        if n >= MAX_GRID:
            converged = False
            break
        prev_edges = key
        n *= 2
        refinements += 1
    return StopSolution(
        lo=lo, hi=hi, xs=xs, obstacle=obs, value=value,
        contact=tuple(intervals), threshold=None,
        base=base, obstacle_fn=obstacle,
        grid_size=n, refinements=refinements, converged=converged,
    )


def _with_threshold(sol: StopSolution, threshold: float | None) -> StopSolution:
    return StopSolution(
        lo=sol.lo, hi=sol.hi, xs=sol.xs, obstacle=sol.obstacle, value=sol.value,
        contact=sol.contact, threshold=threshold, base=sol.base,
        obstacle_fn=sol.obstacle_fn, grid_size=sol.grid_size,
        refinements=sol.refinements, converged=sol.converged,
    )


def _reflect_solution(sol: StopSolution) -> StopSolution:
    contact = tuple(
        sorted((1.0 - r, 1.0 - l) for l, r in sol.contact)
    )
    return StopSolution(
        lo=1.0 - sol.hi, hi=1.0 - sol.lo,
        xs=1.0 - sol.xs[::-1], obstacle=sol.obstacle[::-1].copy(),
        value=sol.value[::-1].copy(),
        contact=contact, threshold=sol.threshold,
        base=sol.base.reflect(), obstacle_fn=sol.obstacle_fn.reflect(),
        grid_size=sol.grid_size, refinements=sol.refinements,
        converged=sol.converged,
    )


def player1_problem(spec: GameSpec, r: float, grid: int = DEFAULT_GRID) -> StopSolution:
    """Player 1's stopping problem against the opponent rule [r, 1].

    ``threshold`` is the upper edge of the contact set (0 when the player
    never stops away from the boundary).
    """
    if not 0.0 < r <= 1.0:
        raise StoppingError(f"opponent threshold r={r:.6g} outside (0, 1]")
    base = harmonic.restrict(spec.g1, harmonic.right_region(r))
    obstacle = spec.f1 - base
    sol = solve_auxiliary(obstacle, base, 0.0, r, grid)
    edges = [e for _, e in sol.contact]
    return _with_threshold(sol, max(edges) if edges else 0.0)


def player2_problem(spec: GameSpec, ell: float, grid: int = DEFAULT_GRID) -> StopSolution:
    """Player 2's stopping problem against the opponent rule [0, ell].

    Solved on the reflected axis so the same left-to-right hull code runs;
    ``threshold`` is the lower edge of the contact set mapped back (1 when
    the player never stops away from the boundary).
    """
    if not 0.0 <= ell < 1.0:
        raise StoppingError(f"opponent threshold ell={ell:.6g} outside [0, 1)")
    base = harmonic.restrict(spec.g2, harmonic.left_region(ell))
    obstacle = (spec.f2 - base).reflect()
    base_r = base.reflect()
    sol = solve_auxiliary(obstacle, base_r, 0.0, 1.0 - ell, grid)
    edges = [e for _, e in sol.contact]
    th = 1.0 - max(edges) if edges else 1.0
    return _with_threshold(_reflect_solution(sol), th)


def player1_interval_problem(spec: GameSpec, r: float, grid: int = DEFAULT_GRID) -> StopSolution:
    """Double-interval variant: same solve, interval contact expected.

    ``threshold`` is the upper contact edge; read the full interval off
    ``contact`` (a single (l1, l2) component for well-posed specs).
    """
    sol = player1_problem(spec, r, grid)
    return sol
