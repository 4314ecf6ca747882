"""Stability of the alternating best-response map and uniqueness analysis.

The composed best-response map moves the lower threshold by a factor whose
magnitude at the fixed point, called rho0 here, decides local convergence;
its supremum over the whole lower strategy set decides global convergence
(and with it existence and uniqueness among threshold rules).  Both are
computed from exact reward derivatives.  A diagonal-dominance style weighted
condition on the utility Hessians gives an independent uniqueness criterion;
``rosen_uniqueness`` searches the weight simplex for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gnep
from .rewards import GameSpec, SpecError

BOUNDARY_TOL = 1e-8


class BoundaryEquilibriumError(SpecError):
    """Stability classification refused at a boundary equilibrium."""


# ---------------------------------------------------------------------------
# local contraction rate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    rho0: float
    classification: str  # "stable" or "unstable"
    thresholds: tuple[float, float]
    lead_factor: float
    follow_factor: float
    closed_form_rho0: float
    partials_rho0: float

    def to_dict(self) -> dict:
        return {
            "rho0": self.rho0,
            "classification": self.classification,
            "thresholds": list(self.thresholds),
            "lead_factor": self.lead_factor,
            "follow_factor": self.follow_factor,
            "closed_form_rho0": self.closed_form_rho0,
            "partials_rho0": self.partials_rho0,
        }


def _closed_form_product(spec: GameSpec, w: float, xbar: float, ybar: float) -> float:
    """Signed product of the two best-response derivative factors.

    Valid where the inner best responses satisfy interior first-order
    conditions; curvature degeneracies propagate as infinities.
    """
    f1p = spec.f1.piece_eval(xbar, 1)
    f1pp = spec.f1.piece_eval(xbar, 2)
    g1p = spec.g1.piece_eval(ybar, 1)
    f2p = spec.f2.piece_eval(ybar, 1)
    f2pp = spec.f2.piece_eval(ybar, 2)
    g2p = spec.g2.piece_eval(w, 1)
    den1 = f1pp * (ybar - xbar)
    den2 = f2pp * (ybar - w)
    if den1 == 0.0 or den2 == 0.0:
        return math.inf
    return ((f1p - g1p) / den1) * ((g2p - f2p) / den2)


def _partials_product(spec: GameSpec, w: float, xbar: float, ybar: float) -> float:
    game = gnep.ThresholdGame(spec)
    _, _, u1xx, u1xy = game.partials1(xbar, ybar)
    _, _, u2yy, u2xy = game.partials2(w, ybar)
    if u1xx == 0.0 or u2yy == 0.0:
        return math.inf
    return (u1xy / u1xx) * (u2xy / u2yy)


def local_rate(spec: GameSpec, ell: float, r: float) -> StabilityReport:
    """Local contraction rate of the alternating map at an interior pair.

    Refuses boundary pairs: at the edge of a strategy set the best response
    is pinned by the constraint rather than a first-order condition, so the
    derivative-based rate does not describe the iteration there.
    """
    a, b = spec.a, spec.b
    if min(ell, a - ell) < BOUNDARY_TOL or min(r - b, 1.0 - r) < BOUNDARY_TOL:
        raise BoundaryEquilibriumError(
            f"equilibrium ({ell:.6g}, {r:.6g}) touches the strategy boundary "
            f"of [0, {a:.6g}] x [{b:.6g}, 1]; the interior rate formula needs "
            "first-order conditions that fail at a pinned best response"
        )
    t_partials = _partials_product(spec, ell, ell, r)
    t_closed = _closed_form_product(spec, ell, ell, r)
    rho0 = abs(t_partials)
    f1p = spec.f1.piece_eval(ell, 1)
    g1p = spec.g1.piece_eval(r, 1)
    f1pp = spec.f1.piece_eval(ell, 2)
    f2p = spec.f2.piece_eval(r, 1)
    g2p = spec.g2.piece_eval(ell, 1)
    f2pp = spec.f2.piece_eval(r, 2)
    lead = (f1p - g1p) / (f1pp * (r - ell)) if f1pp != 0.0 else math.inf
    follow = (g2p - f2p) / (f2pp * (r - ell)) if f2pp != 0.0 else math.inf
    return StabilityReport(
        rho0=rho0,
        classification="stable" if rho0 < 1.0 else "unstable",
        thresholds=(ell, r),
        lead_factor=lead,
        follow_factor=follow,
        closed_form_rho0=abs(t_closed),
        partials_rho0=rho0,
    )


# ---------------------------------------------------------------------------
# global supremum over the lower strategy set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GlobalStabilityReport:
    sup_value: float
    argmax_w: float
    globally_stable: bool
    grid_size: int
    refined: bool
    w_samples: tuple[float, ...]
    t_samples: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "sup_value": self.sup_value,
            "argmax_w": self.argmax_w,
            "globally_stable": self.globally_stable,
            "grid_size": self.grid_size,
            "refined": self.refined,
        }


def stability_product(spec: GameSpec, w: float, game: gnep.ThresholdGame | None = None) -> float:
    """Signed product at one lower threshold w: respond, respond, chain rule."""
    if game is None:
        game = gnep.ThresholdGame(spec)
    ybar = game.best_response2(w).point
    xbar = game.best_response1(ybar).point
    return _closed_form_product(spec, w, xbar, ybar)


def _newton_rows(d1v, d2v, x0: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Row-parallel Newton for stationary points of concave sections.

    d1v/d2v map a point vector to first/second derivative vectors.  Returns
    the polished points and a mask of rows that settled inside their bracket
    with solid negative curvature.
    """
    x = x0.astype(float).copy()
    ok = np.ones(x.shape, dtype=bool)
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(12):
        live = ok & ~done
        if not live.any():
            break
        c = d2v(x)
        solid = c < -gnep.NEWTON_CURVATURE_FLOOR
        ok &= solid | done
        live = ok & ~done
        step = np.zeros_like(x)
        step[live] = d1v(x)[live] / c[live]
        x_try = x - step
        outside = live & ((x_try < lo) | (x_try > hi))
        ok &= ~outside
        move = live & ~outside
        x[move] = x_try[move]
        done |= move & (np.abs(step) < 1e-13)
    return x, ok & done


def _batched_products(spec: GameSpec, ws: np.ndarray, game: gnep.ThresholdGame) -> np.ndarray | None:
    """Vectorized grid phase of both best responses for a scan over ws.

    Only valid when the follower section is [b, 1] for every scanned w (the
    usual a < b separation); returns None otherwise so the caller can fall
    back to the per-point path.  A row-parallel Newton polish reaches the
    tolerance of the scalar route; rows where it fails drop back to that
    route individually.
    """
    a, b = spec.a, spec.b
    if ws.size == 0 or float(np.max(ws)) > b - 1e-9:
        return None
    n = gnep.GOLDEN_GRID
    ys = np.linspace(b, 1.0, n)
    f2y = spec.f2.piece_eval(ys)
    g2w = spec.g2.piece_eval(ws)
    u2 = (f2y[None, :] - np.outer(g2w / (1.0 - ws), 1.0 - ys)) / (ys[None, :] - ws[:, None])
    jmax = np.argmax(u2, axis=1)
    interior2 = (jmax > 0) & (jmax < n - 1)

    def d1_2(y):
        d = y - ws
        return (g2w + spec.f2.piece_eval(y, 1) * d - spec.f2.piece_eval(y)) / (d * d)

    def d2_2(y):
        d = y - ws
        num = g2w + spec.f2.piece_eval(y, 1) * d - spec.f2.piece_eval(y)
        return (spec.f2.piece_eval(y, 2) * d * d - 2.0 * num) / (d * d * d)

    ybar, ok2 = _newton_rows(
        d1_2, d2_2, ys[jmax],
        ys[np.maximum(jmax - 1, 0)], ys[np.minimum(jmax + 1, n - 1)],
    )
    ok2 &= interior2
    for i in np.flatnonzero(~ok2):
        ybar[i] = game.best_response2(float(ws[i])).point

    xs = np.linspace(0.0, a, n)
    f1x = spec.f1.piece_eval(xs)
    g1y = spec.g1.piece_eval(ybar)
    u1 = (f1x[None, :] - np.outer(g1y / ybar, xs)) / (ybar[:, None] - xs[None, :])
    imax = np.argmax(u1, axis=1)
    interior1 = (imax > 0) & (imax < n - 1)

    def d1_1(x):
        d = ybar - x
        return (spec.f1.piece_eval(x) + spec.f1.piece_eval(x, 1) * d - g1y) / (d * d)

    def d2_1(x):
        d = ybar - x
        num = spec.f1.piece_eval(x) + spec.f1.piece_eval(x, 1) * d - g1y
        return (spec.f1.piece_eval(x, 2) * d * d + 2.0 * num) / (d * d * d)

    xbar, ok1 = _newton_rows(
        d1_1, d2_1, xs[imax],
        xs[np.maximum(imax - 1, 0)], xs[np.minimum(imax + 1, n - 1)],
    )
    ok1 &= interior1
    for i in np.flatnonzero(~ok1):
        xbar[i] = game.best_response1(float(ybar[i])).point

    f1p = spec.f1.piece_eval(xbar, 1)
    f1pp = spec.f1.piece_eval(xbar, 2)
    g1p = spec.g1.piece_eval(ybar, 1)
    f2p = spec.f2.piece_eval(ybar, 1)
    f2pp = spec.f2.piece_eval(ybar, 2)
    g2p = spec.g2.piece_eval(ws, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = (f1p - g1p) / (f1pp * (ybar - xbar))
        follow = (g2p - f2p) / (f2pp * (ybar - ws))
        out = lead * follow
    return np.where(np.isfinite(out), out, np.inf)


def global_stability(
    spec: GameSpec,
    wgrid: int = 1024,
    refine_tol: float = 1e-6,
) -> GlobalStabilityReport:
    """Supremum of the product magnitude over the lower strategy set.

    Grid scan over [0, a] followed by a golden-section refinement around the
    grid maximizer.  A supremum below one certifies convergence from every
    start, existence of the fixed point, and its uniqueness among threshold
    rules.
    """
    game = gnep.ThresholdGame(spec)
    ws = np.linspace(0.0, spec.a, wgrid)
    batched = _batched_products(spec, ws, game)
    if batched is not None:
        ts = np.abs(batched)
    else:
        ts = np.array([abs(stability_product(spec, float(w), game)) for w in ws])
    i = int(np.argmax(ts))
    sup_val = float(ts[i])
    arg = float(ws[i])
    lo = float(ws[max(i - 1, 0)])
    hi = float(ws[min(i + 1, wgrid - 1)])
    refined = False
    if hi > lo:
        br = gnep.maximize_section(
            lambda xs: np.array([abs(stability_product(spec, float(x), game)) for x in np.atleast_1d(xs)]),
            lo, hi, tol=refine_tol,
        )
        if br.value > sup_val:
            sup_val, arg = br.value, br.point
            refined = True
    return GlobalStabilityReport(
        sup_value=sup_val,
        argmax_w=arg,
        globally_stable=sup_val < 1.0,
        grid_size=wgrid,
        refined=refined,
        w_samples=tuple(float(w) for w in ws),
        t_samples=tuple(float(t) for t in ts),
    )


# ---------------------------------------------------------------------------
# weighted Hessian uniqueness criterion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RosenReport:
    holds: bool
    weights: tuple[float, float]
    min_margin: float
    argmin: tuple[float, float]
    diag1_ok: bool
    diag2_ok: bool
    diag1_margin: float
    diag2_margin: float
    grid_size: int

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "weights": list(self.weights),
            "min_margin": self.min_margin,
            "argmin": list(self.argmin),
            "diag1_ok": self.diag1_ok,
            "diag2_ok": self.diag2_ok,
            "diag1_margin": self.diag1_margin,
            "diag2_margin": self.diag2_margin,
            "grid_size": self.grid_size,
        }


def _hessian_terms(spec: GameSpec, X: np.ndarray, Y: np.ndarray):
    """H1, H2 (diagonal, scaled by the cubed gap) and H3, H4 (cross terms)."""
    d = Y - X
    f1, f1p, f1pp = (spec.f1.piece_eval(X, k) for k in range(3))
    g1, g1p = spec.g1.piece_eval(Y), spec.g1.piece_eval(Y, 1)
    f2, f2p, f2pp = (spec.f2.piece_eval(Y, k) for k in range(3))
    g2, g2p = spec.g2.piece_eval(X), spec.g2.piece_eval(X, 1)
    h1 = f1pp * d * d + 2.0 * (f1 + f1p * d - g1)
    h2 = f2pp * d * d + 2.0 * (f2 - f2p * d - g2)
    h3 = 2.0 * (g1 - f1) - (f1p + g1p) * d
    h4 = 2.0 * (g2 - f2) + (g2p + f2p) * d
    return h1, h2, h3, h4


def rosen_uniqueness(
    spec: GameSpec,
    weights: tuple[float, float] | None = None,
    grid: int = 128,
    weight_grid: int = 41,
) -> RosenReport:
    """Search the weight simplex for the strict diagonal-concavity criterion.

    The criterion asks the weighted pseudo-Hessian of the utility pair to be
    negative definite over the strategy rectangle:  both diagonal terms
    nonpositive, and 4 r1 r2 H1 H2 - (r1 H3 + r2 H4)^2 strictly positive.
    The expression is homogeneous of degree two in the weights, so the scan
    runs over r1 + r2 = 1.  Pass ``weights`` to evaluate one pair only.
    """
    a, b = spec.a, spec.b
    xs = np.linspace(0.0, a, grid)
    ys = np.linspace(b, 1.0, grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    h1, h2, h3, h4 = _hessian_terms(spec, X, Y)

    # diagonal conditions on the open slices
    inner_x = slice(1, -1)
    d1 = -h1[inner_x, :]
    d2 = -h2[:, 1:-1]
    diag1_margin = float(np.min(d1))
    diag2_margin = float(np.min(d2))
    diag1_ok = diag1_margin >= -1e-12
    diag2_ok = diag2_margin >= -1e-12

    if weights is not None:
        cand = [tuple(map(float, weights))]
    else:
        lam = np.linspace(0.0, 1.0, weight_grid)
        cand = [(float(l), float(1.0 - l)) for l in lam]
    best_margin = -math.inf
    best_w = cand[0]
    best_arg = (0.0, 0.0)
    for r1, r2 in cand:
        expr = 4.0 * r1 * r2 * h1 * h2 - (r1 * h3 + r2 * h4) ** 2
        m = float(np.min(expr))
        if m > best_margin:
            best_margin = m
            best_w = (r1, r2)
            i, j = np.unravel_index(int(np.argmin(expr)), expr.shape)
            best_arg = (float(X[i, j]), float(Y[i, j]))
    holds = diag1_ok and diag2_ok and best_margin > 0.0
    return RosenReport(
        holds=holds,
        weights=best_w,
        min_margin=best_margin,
        argmin=best_arg,
        diag1_ok=diag1_ok,
        diag2_ok=diag2_ok,
        diag1_margin=diag1_margin,
        diag2_margin=diag2_margin,
        grid_size=grid,
    )
