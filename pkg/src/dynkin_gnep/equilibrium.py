"""Equilibrium computation and certification for threshold strategies.

Two independent routes compute the same fixed point:

* ``gauss_seidel`` alternates the ratio-utility best responses of the gnep
  module (fast, derivative-polished);
* ``dp_policy_iteration`` alternates full stopping-problem solves through the
  concave-majorant machinery of the valuefn module.

``certify_threshold`` checks a candidate pair directly against the
equilibrium inequalities on a grid and against the value-function route, so
a certificate never depends on how the candidate was produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gnep, harmonic, valuefn
from .rewards import GameSpec, SpecError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
CERT_TOL = 1e-8
VALUE_TOL = 1e-6


class ConvergenceError(SpecError):
    """Iteration failed to converge within the step budget."""


@dataclass(frozen=True)
class EquilibriumSolution:
    thresholds: tuple[float, float]
    converged: bool
    iterations: int
    residuals: tuple[float, ...]      # movement of the lower threshold
    r_residuals: tuple[float, ...]    # movement of the upper threshold (diagnostic)
    fitted_rate: float | None
    cycling: bool
    tied: bool
    trace: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "converged": self.converged,
            "iterations": self.iterations,
            "residuals": list(self.residuals),
            "r_residuals": list(self.r_residuals),
            "fitted_rate": self.fitted_rate,
            "cycling": self.cycling,
            "tied": self.tied,
            "trace": [list(t) for t in self.trace],
        }


def _fit_rate(residuals: tuple[float, ...]) -> float | None:
    """Least-squares slope of log residuals over the usable tail."""
    tail = [r for r in residuals if r > 1e-15][-20:]
    if len(tail) < 3:
        return None
    ks = np.arange(len(tail), dtype=float)
    slope = np.polyfit(ks, np.log(tail), 1)[0]
    return float(math.exp(slope))


def gauss_seidel(
    spec: GameSpec,
    start: float | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> EquilibriumSolution:
    """Alternating best responses from the lower threshold ``start``.

    Convergence is judged on the movement of the lower threshold; the upper
    threshold's movement is carried along as a diagnostic.  Period-two
    cycling is detected and flagged rather than looping the budget out.
    """
    game = gnep.ThresholdGame(spec)
    ell = spec.a / 2.0 if start is None else float(start)
    if not 0.0 <= ell <= spec.a:
        raise SpecError(f"start {ell:.6g} outside the strategy set [0, {spec.a:.6g}]")
    residuals: list[float] = []
    r_residuals: list[float] = []
    trace: list[tuple[float, float]] = []
    tied = False
    r_prev: float | None = None
    converged = False
    cycling = False
    for _ in range(max_iter):
        br2 = game.best_response2(ell)
        r = br2.point
        br1 = game.best_response1(r)
        ell_new = br1.point
        tied = tied or br1.tied or br2.tied
        residuals.append(abs(ell_new - ell))
        r_residuals.append(abs(r - r_prev) if r_prev is not None else math.inf)
        trace.append((ell_new, r))
        ell, r_prev = ell_new, r
        if residuals[-1] < tol:
            converged = True
            break
        if len(trace) >= 5:
            back2 = abs(trace[-1][0] - trace[-3][0])
            if back2 < max(10.0 * tol, 1e-13) and residuals[-1] > 100.0 * tol:
                cycling = True
                break
    r_res = tuple(r for r in r_residuals if r < math.inf)
    return EquilibriumSolution(
        thresholds=(ell, r_prev if r_prev is not None else spec.b),
        converged=converged,
        iterations=len(trace),
        residuals=tuple(residuals),
        r_residuals=r_res,
        fitted_rate=_fit_rate(tuple(residuals)),
        cycling=cycling,
        tied=tied,
        trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    ok: bool
    max_improvement1: float
    max_improvement2: float
    improvement_tolerance: float
    value_gap1: float | None
    value_gap2: float | None
    value_tolerance: float
    grid_size: int

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "max_improvement1": self.max_improvement1,
            "max_improvement2": self.max_improvement2,
            "improvement_tolerance": self.improvement_tolerance,
            "value_gap1": self.value_gap1,
            "value_gap2": self.value_gap2,
            "value_tolerance": self.value_tolerance,
            "grid_size": self.grid_size,
        }


def certify_threshold(
    spec: GameSpec,
    ell: float,
    r: float,
    grid: int = 4096,
    tol: float = CERT_TOL,
    value_tol: float = VALUE_TOL,
    check_values: bool = True,
) -> Certificate:
    """Certify (ell, r) as an equilibrium of the threshold game.

    Grid checks of the two one-sided deviation inequalities over the full
    extended sections [0, r) and (ell, 1], plus (optionally) agreement of the
    closed-form threshold payoff with the stopping values computed by the
    majorant route, each within its stated tolerance.
    """
    if not ell < r:
        raise SpecError(f"certification needs ell < r, got ({ell:.6g}, {r:.6g})")
    game = gnep.ThresholdGame(spec)
    u1_ref = game.utility1(ell, r) if ell < r else -math.inf
    xs = np.linspace(0.0, r, grid, endpoint=False)
    imp1 = float(np.max(game.utility1(xs, r) - u1_ref))
    u2_ref = game.utility2(ell, r)
    ys = np.linspace(ell, 1.0, grid + 1)[1:]
    imp2 = float(np.max(game.utility2(ell, ys) - u2_ref))
    gap1 = gap2 = None
    if check_values:
        full = np.linspace(0.0, 1.0, grid + 1)
        m1 = harmonic.two_threshold_payoff(spec.f1, spec.g1, ell, r)
        sol1 = valuefn.player1_problem(spec, r, grid)
        gap1 = float(np.max(np.abs(sol1.full_value(full) - m1.piece_eval(full))))
        m2 = harmonic.two_threshold_payoff(spec.g2, spec.f2, ell, r)
        sol2 = valuefn.player2_problem(spec, ell, grid)
        gap2 = float(np.max(np.abs(sol2.full_value(full) - m2.piece_eval(full))))
    ok = imp1 <= tol and imp2 <= tol
    if check_values:
        ok = ok and gap1 <= value_tol and gap2 <= value_tol
    return Certificate(
        ok=ok,
        max_improvement1=imp1,
        max_improvement2=imp2,
        improvement_tolerance=tol,
        value_gap1=gap1,
        value_gap2=gap2,
        value_tolerance=value_tol,
        grid_size=grid,
    )


def solve(
    spec: GameSpec,
    start: float | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    grid: int = 4096,
) -> tuple[EquilibriumSolution, Certificate]:
    """Iterate to a fixed point and certify it.  The standard entry point."""
    sol = gauss_seidel(spec, start=start, tol=tol, max_iter=max_iter)
    if not sol.converged:
        raise ConvergenceError(
            f"no convergence in {sol.iterations} iterations"
            + (" (period-2 cycling detected)" if sol.cycling else "")
        )
    ell, r = sol.thresholds
    cert = certify_threshold(spec, ell, r, grid=grid)
    return sol, cert


# ---------------------------------------------------------------------------
# dynamic-programming route
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DPSolution:
    thresholds: tuple[float, float]
    converged: bool
    iterations: int
    residuals: tuple[float, ...]
    warnings: tuple[str, ...]
    trace: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "converged": self.converged,
            "iterations": self.iterations,
            "residuals": list(self.residuals),
            "warnings": list(self.warnings),
            "trace": [list(t) for t in self.trace],
        }


def dp_policy_iteration(
    spec: GameSpec,
    start: float | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100,
    grid: int = valuefn.DEFAULT_GRID,
) -> DPSolution:
    """Alternate full stopping solves instead of utility maximizations.

    Each half-step solves the opponent-frozen stopping problem by the
    majorant route and reads the next threshold off the contact set.  A
    contact set that is not a single interval is replaced by its convex hull
    and recorded as a warning.
    """
    ell = spec.a / 2.0 if start is None else float(start)
    if not 0.0 <= ell <= spec.a:
        raise SpecError(f"start {ell:.6g} outside the strategy set [0, {spec.a:.6g}]")
    residuals: list[float] = []
    trace: list[tuple[float, float]] = []
    warnings: list[str] = []
    converged = False
    r = 1.0
    for _ in range(max_iter):
        sol2 = valuefn.player2_problem(spec, ell, grid)
        r = sol2.threshold if sol2.threshold is not None else 1.0
        if len(sol2.contact) > 1:
            warnings.append(
                f"player-2 contact at ell={ell:.6g} has {len(sol2.contact)} "
                "components; convex hull taken"
            )
        sol1 = valuefn.player1_problem(spec, r, grid)
        ell_new = sol1.threshold if sol1.threshold is not None else 0.0
        if len(sol1.contact) > 1:
            warnings.append(
                f"player-1 contact at r={r:.6g} has {len(sol1.contact)} "
                "components; convex hull taken"
            )
        residuals.append(abs(ell_new - ell))
        trace.append((ell_new, r))
        ell = ell_new
        if residuals[-1] < tol:
            converged = True
            break
    return DPSolution(
        thresholds=(ell, r),
        converged=converged,
        iterations=len(trace),
        residuals=tuple(residuals),
        warnings=tuple(dict.fromkeys(warnings)),
        trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# three-player double-interval game
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThreeCertificate:
    ok: bool
    interval_in_bounds: bool
    max_improvement1: float
    max_improvement2: float
    max_improvement3: float
    u2_value: float
    u2_nonnegative: bool
    improvement_tolerance: float
    grid_size: int

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "interval_in_bounds": self.interval_in_bounds,
            "max_improvement1": self.max_improvement1,
            "max_improvement2": self.max_improvement2,
            "max_improvement3": self.max_improvement3,
            "u2_value": self.u2_value,
            "u2_nonnegative": self.u2_nonnegative,
            "improvement_tolerance": self.improvement_tolerance,
            "grid_size": self.grid_size,
        }


@dataclass(frozen=True)
class ThreeSolution:
    thresholds: tuple[float, float, float]
    converged: bool
    iterations: int
    residuals: tuple[float, ...]
    trace: tuple[tuple[float, float, float], ...]

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "converged": self.converged,
            "iterations": self.iterations,
            "residuals": list(self.residuals),
            "trace": [list(t) for t in self.trace],
        }


def solve_three_player(
    spec: GameSpec,
    start: tuple[float, float, float] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ThreeSolution:
    """Cyclic best responses for the interval-edge players and the right
    threshold, started by default from the widest configuration."""
    game = gnep.IntervalGame(spec)
    a1, a2, _ = spec.geometry
    x, y, z = (a1, a2, 1.0) if start is None else tuple(map(float, start))
    residuals: list[float] = []
    trace: list[tuple[float, float, float]] = []
    converged = False
    for _ in range(max_iter):
        z_new = game.best_response3(x, y).point
        y_new = game.best_response2(x, z_new).point
        x_new = game.best_response1(y_new, z_new).point
        residuals.append(abs(x_new - x) + abs(y_new - y) + abs(z_new - z))
        x, y, z = x_new, y_new, z_new
        trace.append((x, y, z))
        if residuals[-1] < tol:
            converged = True
            break
    return ThreeSolution(
        thresholds=(x, y, z),
        converged=converged,
        iterations=len(trace),
        residuals=tuple(residuals),
        trace=tuple(trace),
    )


def certify_three_player(
    spec: GameSpec,
    thresholds: tuple[float, float, float],
    grid: int = 2048,
    tol: float = CERT_TOL,
) -> ThreeCertificate:
    """Certify a double-interval profile.

    Checks the interval bounds, the two interval-edge deviation inequalities
    on their extended sections, the right player's deviation inequality, and
    the sign of the middle utility that decides whether the profile maps back
    to an equilibrium of the underlying stopping game.
    """
    l1, l2, r = thresholds
    if not l1 <= l2 < r:
        raise SpecError(f"need l1 <= l2 < r, got {thresholds}")
    game = gnep.IntervalGame(spec)
    a1, a2, _ = spec.geometry
    in_bounds = a1 - 1e-12 <= l1 <= l2 <= a2 + 1e-12
    ref1 = game.utility1(l1, r)
    xs = np.linspace(0.0, r, grid, endpoint=False)
    imp1 = float(np.max(game.utility1(xs, r) - ref1))
    ref2 = game.utility2(l2, r)
    ys = np.linspace(0.0, r, grid, endpoint=False)
    imp2 = float(np.max(game.utility2(ys, r) - ref2))
    ref3 = game.utility3(l2, r)
    zs = np.linspace(l2, 1.0, grid + 1)[1:]
    imp3 = float(np.max(game.utility3(l2, zs) - ref3))
    u2 = ref2
    ok = (
        in_bounds
        and imp1 <= tol
        and imp2 <= tol
        and imp3 <= tol
        and u2 >= -tol
    )
    return ThreeCertificate(
        ok=ok,
        interval_in_bounds=in_bounds,
        max_improvement1=imp1,
        max_improvement2=imp2,
        max_improvement3=imp3,
        u2_value=u2,
        u2_nonnegative=bool(u2 >= -tol),
        improvement_tolerance=tol,
        grid_size=grid,
    )
