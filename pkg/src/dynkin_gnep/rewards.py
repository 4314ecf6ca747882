"""Reward functions and game specifications.

Rewards live on [0,1] and are represented as piecewise polynomials with exact
derivatives, which keeps curvature checks and the tangency algebra used by the
solver free of discretization error.  This module owns:

* ``PiecewisePoly``: the function representation, with a smoothness-gated
  public evaluator and an ungated piece-local evaluator for interior work;
* ``GameSpec``: the six reward functions plus geometry, boundary values and
  discount rate, with JSON persistence and a content digest;
* ``validate``: grid certification of the geometric conditions the solver
  relies on (named A1, A1p, G1, G1p, G2, U below);
* ``normalize_boundary``: absorbs nonzero boundary rewards into the running
  rewards by subtracting their harmonic extension;
* ``builtin_example``: generators for the games used throughout the tests.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

MATCH_TOL = 1e-10   # smoothness matching and boundary vanishing
SIGN_TOL = 1e-10    # curvature sign decisions; ties at zero fail strict checks
MAX_DEGREE = 4

CONDITION_NAMES = ("A1", "A1p", "G1", "G1p", "G2", "U")


class SpecError(ValueError):
    """Base class for everything this module can reject."""


class DomainError(SpecError):
    """Evaluation point outside [0,1]."""


class SmoothnessError(SpecError):
    """Derivative order exceeds the declared smoothness class."""


class SpecFormatError(SpecError):
    """Malformed or inconsistent game specification."""


# ---------------------------------------------------------------------------
# piecewise polynomials
# ---------------------------------------------------------------------------

def _shift_coeffs(coeffs: Sequence[float], delta: float) -> tuple[float, ...]:
    """Coefficients of p(t + delta) given ascending coefficients of p(t)."""
    n = len(coeffs)
    out = [0.0] * n
    for i in range(n):
        acc = 0.0
        for k in range(i, n):
            acc += coeffs[k] * math.comb(k, i) * delta ** (k - i)
        out[i] = acc
    return tuple(out)


def _derive_coeffs(coeffs: Sequence[float], order: int) -> tuple[float, ...]:
    c = list(coeffs)
    for _ in range(order):
        c = [k * c[k] for k in range(1, len(c))]
        if not c:
            c = [0.0]
    return tuple(c)


class PiecewisePoly:
    """A piecewise polynomial on [0,1] with exact derivatives.

    ``breakpoints`` is the ordered grid 0 = x_0 < ... < x_m = 1 and
    ``pieces[k]`` holds ascending coefficients of piece k in the local
    variable (x - x_k).  Degree is capped at 4.  ``smoothness`` declares the
    continuity class (0, 1 or 2); the declared matching of values and
    derivatives at interior breakpoints is verified to 1e-10 on construction.

    Piece selection is right continuous: x_k belongs to piece k, and x = 1
    belongs to the last piece.
    """

    __slots__ = ("breakpoints", "pieces", "smoothness", "_bp", "_dtabs")

    def __init__(
        self,
        breakpoints: Sequence[float],
        pieces: Sequence[Sequence[float]],
        smoothness: int = 0,
    ) -> None:
        bp = tuple(float(x) for x in breakpoints)
        if len(bp) < 2:
            raise SpecFormatError("need at least two breakpoints")
        if len(pieces) != len(bp) - 1:
            raise SpecFormatError(
                f"{len(bp)} breakpoints require {len(bp) - 1} pieces, got {len(pieces)}"
            )
        if abs(bp[0]) > 1e-12 or abs(bp[-1] - 1.0) > 1e-12:
            raise SpecFormatError("breakpoints must start at 0 and end at 1")
        bp = (0.0,) + bp[1:-1] + (1.0,)
        if any(b2 - b1 <= 0 for b1, b2 in zip(bp, bp[1:])):
            raise SpecFormatError("breakpoints must be strictly increasing")
        ps = []
        for k, p in enumerate(pieces):
            c = tuple(float(v) for v in p)
            if not 1 <= len(c) <= MAX_DEGREE + 1:
                raise SpecFormatError(f"piece {k}: degree above {MAX_DEGREE}")
            ps.append(c)
        if smoothness not in (0, 1, 2):
            raise SpecFormatError("smoothness class must be 0, 1 or 2")

        self.breakpoints: tuple[float, ...] = bp
        self.pieces: tuple[tuple[float, ...], ...] = tuple(ps)
        self.smoothness = int(smoothness)
        self._bp = np.asarray(bp)
        # padded coefficient tables per derivative order, shape (npieces, 5)
        tabs = []
        for order in range(MAX_DEGREE + 1):
            tab = np.zeros((len(ps), MAX_DEGREE + 1))
            for k, c in enumerate(ps):
                d = _derive_coeffs(c, order)
                tab[k, : len(d)] = d
            tabs.append(tab)
        self._dtabs = tabs
        self._check_matching()

    def _check_matching(self) -> None:
        for order in range(self.smoothness + 1):
            for k in range(len(self.pieces) - 1):
                xk = self.breakpoints[k + 1]
                left = self._eval_piece(k, xk, order)
                right = self._eval_piece(k + 1, xk, order)
                if abs(left - right) > MATCH_TOL * (1.0 + abs(left)):
                    raise SpecFormatError(
                        f"declared C{self.smoothness} fails at breakpoint "
                        f"{xk:.12g}: order-{order} jump {right - left:.3e}"
                    )

    # -- evaluation ---------------------------------------------------------

    def _indices(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._bp, x, side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def _eval_piece(self, k: int, x: float, order: int) -> float:
        t = x - self.breakpoints[k]
        c = self._dtabs[order][k] if order <= MAX_DEGREE else None
        if c is None:
            return 0.0
        acc = 0.0
        for v in c[::-1]:
            acc = acc * t + v
        return acc

    def piece_eval(self, x, order: int = 0):
        """Evaluate the stored polynomial pieces with no smoothness gate.

        Right-continuous piece selection; x is clamped into [0,1] to absorb
        roundoff from upstream arithmetic.  For a C0 function and order >= 1
        this returns one-sided values at breakpoints, which is what the
        interior tangency formulas need.  Accepts scalars or arrays.
        """
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        flat = np.clip(np.atleast_1d(arr), 0.0, 1.0)
        if order > MAX_DEGREE:
            out = np.zeros_like(flat)
        else:
            idx = self._indices(flat)
            t = flat - self._bp[idx]
            tab = self._dtabs[order]
            out = np.zeros_like(flat)
            for j in range(MAX_DEGREE, -1, -1):
                out = out * t + tab[idx, j]
        return float(out[0]) if scalar else out.reshape(arr.shape)

    def __call__(self, x, order: int = 0):
        """Public evaluator.  Raises outside [0,1] or above the declared class."""
        if order > self.smoothness:
            raise SmoothnessError(
                f"order {order} evaluation of a C{self.smoothness} function"
            )
        arr = np.asarray(x, dtype=float)
        if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
            bad = arr[(arr < -1e-12) | (arr > 1.0 + 1e-12)]
            raise DomainError(f"evaluation outside [0,1]: {float(np.ravel(bad)[0]):.6g}")
        return self.piece_eval(arr, order)

    # -- calculus and algebra ----------------------------------------------

    def derivative(self) -> "PiecewisePoly":
        if self.smoothness < 1:
            raise SmoothnessError("derivative of a C0 function is not representable")
        return PiecewisePoly(
            self.breakpoints,
            [_derive_coeffs(c, 1) for c in self.pieces],
            self.smoothness - 1,
        )

    def __neg__(self) -> "PiecewisePoly":
        return PiecewisePoly(
            self.breakpoints,
            [tuple(-v for v in c) for c in self.pieces],
            self.smoothness,
        )

    def scale(self, factor: float) -> "PiecewisePoly":
        return PiecewisePoly(
            self.breakpoints,
            [tuple(factor * v for v in c) for c in self.pieces],
            self.smoothness,
        )

    def __add__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        bp = sorted(set(self.breakpoints) | set(other.breakpoints))
        pieces = []
        for k in range(len(bp) - 1):
            x0 = bp[k]
            ca = self._local_coeffs(x0)
            cb = other._local_coeffs(x0)
            n = max(len(ca), len(cb))
            pieces.append(
                tuple(
                    (ca[i] if i < len(ca) else 0.0) + (cb[i] if i < len(cb) else 0.0)
                    for i in range(n)
                )
            )
        return PiecewisePoly(bp, pieces, min(self.smoothness, other.smoothness))

    def __sub__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        return self + (-other)

    def _local_coeffs(self, x0: float) -> tuple[float, ...]:
        """Coefficients of the piece containing x0, recentred at x0."""
        k = int(self._indices(np.asarray(x0)))
        return _shift_coeffs(self.pieces[k], x0 - self.breakpoints[k])

    def reflect(self) -> "PiecewisePoly":
        """The function x -> self(1 - x)."""
        bp = [1.0 - x for x in self.breakpoints[::-1]]
        pieces = []
        for k in range(len(self.pieces) - 1, -1, -1):
            length = self.breakpoints[k + 1] - self.breakpoints[k]
            shifted = _shift_coeffs(self.pieces[k], length)
            pieces.append(tuple(v if i % 2 == 0 else -v for i, v in enumerate(shifted)))
        return PiecewisePoly(bp, pieces, self.smoothness)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def single(coeffs: Sequence[float], smoothness: int = 2) -> "PiecewisePoly":
        return PiecewisePoly((0.0, 1.0), (tuple(coeffs),), smoothness)

    @staticmethod
    def zero() -> "PiecewisePoly":
        return PiecewisePoly.single((0.0,))

    @staticmethod
    def line(v0: float, v1: float) -> "PiecewisePoly":
        """The linear function with values v0 at 0 and v1 at 1."""
        return PiecewisePoly.single((v0, v1 - v0))

    # -- introspection ------------------------------------------------------

    def max_jump(self, order: int) -> float:
        """Largest relative order-th derivative jump at interior breakpoints."""
        worst = 0.0
        for k in range(len(self.pieces) - 1):
            xk = self.breakpoints[k + 1]
            left = self._eval_piece(k, xk, order)
            right = self._eval_piece(k + 1, xk, order)
            worst = max(worst, abs(right - left) / (1.0 + abs(left)))
        return worst

    def detect_smoothness(self) -> int:
        s = 0
        while s < 2 and self.max_jump(s + 1) <= MATCH_TOL:
            s += 1
        return s

    def with_smoothness(self, smoothness: int) -> "PiecewisePoly":
        return PiecewisePoly(self.breakpoints, self.pieces, smoothness)

    def to_dict(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "pieces": [list(c) for c in self.pieces],
            "smoothness": f"C{self.smoothness}",
        }

    @staticmethod
    def from_dict(data: dict) -> "PiecewisePoly":
        try:
            bp = data["breakpoints"]
            pieces = data["pieces"]
        except (KeyError, TypeError) as exc:
            raise SpecFormatError(f"bad piecewise payload: {exc}") from exc
        declared = data.get("smoothness")
        probe = PiecewisePoly(bp, pieces, 0)
        if declared is None:
            return probe.with_smoothness(probe.detect_smoothness())
        name = str(declared).upper()
        if name not in ("C0", "C1", "C2"):
            raise SpecFormatError(f"unknown smoothness class {declared!r}")
        return probe.with_smoothness(int(name[1]))

    def __repr__(self) -> str:
        return (
            f"PiecewisePoly(npieces={len(self.pieces)}, "
            f"smoothness=C{self.smoothness})"
        )


# ---------------------------------------------------------------------------
# game specification
# ---------------------------------------------------------------------------

REWARD_KEYS = ("f1", "g1", "h1", "f2", "g2", "h2")


@dataclass(frozen=True)
class GameSpec:
    """Six reward functions plus geometry, boundary rewards and discount.

    ``geometry`` is (a, b) for single-threshold games and (a1, a2, b) for the
    double-interval extension.  ``boundary`` holds the rewards paid at 0 and 1
    before normalization.  ``discount`` is the kill rate of the underlying
    process (0 for the core game; positive rates enter via the transform
    module, which reduces them away before this package's solvers run).
    """

    f1: PiecewisePoly
    g1: PiecewisePoly
    h1: PiecewisePoly
    f2: PiecewisePoly
    g2: PiecewisePoly
    h2: PiecewisePoly
    geometry: tuple[float, ...]
    boundary: tuple[float, float] = (0.0, 0.0)
    discount: float = 0.0

    def __post_init__(self) -> None:
        geo = tuple(float(v) for v in self.geometry)
        if len(geo) not in (2, 3):
            raise SpecFormatError("geometry must be (a, b) or (a1, a2, b)")
        if any(not 0.0 < v < 1.0 for v in geo):
            raise SpecFormatError("geometry points must lie strictly inside (0,1)")
        if len(geo) == 3 and not geo[0] <= geo[1] < geo[2]:
            raise SpecFormatError("need a1 <= a2 < b")
        object.__setattr__(self, "geometry", geo)
        object.__setattr__(
            self, "boundary", (float(self.boundary[0]), float(self.boundary[1]))
        )
        if self.discount < 0:
            raise SpecFormatError("discount rate must be nonnegative")

    # geometry accessors
    @property
    def two_interval(self) -> bool:
        return len(self.geometry) == 3

    @property
    def a(self) -> float:
        if self.two_interval:
            raise SpecFormatError("single-threshold accessor on a two-interval spec")
        return self.geometry[0]

    @property
    def b(self) -> float:
        return self.geometry[-1]

    @property
    def a1(self) -> float:
        return self.geometry[0]

    @property
    def a2(self) -> float:
        return self.geometry[1] if self.two_interval else self.geometry[0]

    def rewards(self) -> dict[str, PiecewisePoly]:
        return {k: getattr(self, k) for k in REWARD_KEYS}

    def player(self, i: int) -> tuple[PiecewisePoly, PiecewisePoly, PiecewisePoly]:
        if i == 1:
            return self.f1, self.g1, self.h1
        if i == 2:
            return self.f2, self.g2, self.h2
        raise ValueError("player index must be 1 or 2")

    def to_dict(self) -> dict:
        if self.two_interval:
            geo = {"a1": self.geometry[0], "a2": self.geometry[1], "b": self.geometry[2]}
        else:
            geo = {"a": self.geometry[0], "b": self.geometry[1]}
        return {
            "geometry": geo,
            "discount": self.discount,
            "boundary": list(self.boundary),
            "rewards": {k: v.to_dict() for k, v in self.rewards().items()},
        }

    @staticmethod
    def from_dict(data: dict) -> "GameSpec":
        try:
            geo_in = data["geometry"]
            rewards_in = data["rewards"]
        except (KeyError, TypeError) as exc:
            raise SpecFormatError(f"missing spec key: {exc}") from exc
        if "a" in geo_in:
            geometry = (geo_in["a"], geo_in["b"])
        elif "a1" in geo_in:
            geometry = (geo_in["a1"], geo_in["a2"], geo_in["b"])
        else:
            raise SpecFormatError("geometry needs either key 'a' or keys 'a1','a2'")
        missing = [k for k in REWARD_KEYS if k not in rewards_in]
        if missing:
            raise SpecFormatError(f"missing rewards: {', '.join(missing)}")
        kw = {k: PiecewisePoly.from_dict(rewards_in[k]) for k in REWARD_KEYS}
        boundary = tuple(data.get("boundary", (0.0, 0.0)))
        if len(boundary) != 2:
            raise SpecFormatError("boundary must be a pair [H0, H1]")
        return GameSpec(
            geometry=geometry,
            boundary=boundary,  # type: ignore[arg-type]
            discount=float(data.get("discount", 0.0)),
            **kw,
        )

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_spec(spec: GameSpec, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")


def load_spec(path: str) -> GameSpec:
    """Load, normalize boundary rewards, and enforce the vanishing contract.

    A spec whose rewards do not vanish at both endpoints after boundary
    normalization is rejected here rather than producing bad numbers later.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecFormatError(f"not valid JSON: {exc}") from exc
    return spec_from_dict(data)


def spec_from_dict(data: dict) -> GameSpec:
    """Build, boundary-normalize, and endpoint-check a spec from plain data."""
    spec = normalize_boundary(GameSpec.from_dict(data))
    for name, fn in spec.rewards().items():
        for x in (0.0, 1.0):
            v = fn.piece_eval(x)
            if abs(v) > MATCH_TOL:
                raise SpecFormatError(
                    f"reward {name} does not vanish at {x:g} after boundary "
                    f"normalization (value {v:.3e})"
                )
    return spec


def normalize_boundary(spec: GameSpec) -> GameSpec:
    """Subtract the harmonic extension of the boundary rewards.

    For the driving process on (0,1) the extension of boundary values
    (H0, H1) is the line H0*(1-x) + H1*x; subtracting it from all six rewards
    leaves an equivalent game paying zero at the boundary.  Idempotent, and
    exact when the boundary pair is already (0,0).
    """
    h0, h1 = spec.boundary
    if h0 == 0.0 and h1 == 0.0:
        return spec
    correction = PiecewisePoly.line(h0, h1)
    shifted = {k: v - correction for k, v in spec.rewards().items()}
    return GameSpec(
        geometry=spec.geometry,
        boundary=(0.0, 0.0),
        discount=spec.discount,
        **shifted,
    )


# ---------------------------------------------------------------------------
# condition validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    location: tuple[float, ...]
    clause: str
    margin: float

    def to_dict(self) -> dict:
        return {
            "location": list(self.location),
            "clause": self.clause,
            "margin": self.margin,
        }


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    holds: bool
    witnesses: tuple[Witness, ...]
    margin: float
    tolerance: float = SIGN_TOL

    def __post_init__(self) -> None:
        if self.holds != (len(self.witnesses) == 0):
            raise ValueError("holds must mirror an empty witness list")

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "holds": self.holds,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "witnesses": [w.to_dict() for w in self.witnesses],
        }


class _Checker:
    """Accumulates margins and witnesses for one condition."""

    def __init__(self, condition: str) -> None:
        self.condition = condition
        self.margin = math.inf
        self.witnesses: list[Witness] = []

    def record(self, ok: bool, margin: float, location: tuple[float, ...], clause: str) -> None:
        self.margin = min(self.margin, margin)
        if not ok:
            self.witnesses.append(Witness(location, clause, margin))

    def report(self) -> ConditionReport:
        ws = tuple(self.witnesses[:32])
        margin = self.margin if self.margin < math.inf else 0.0
        return ConditionReport(self.condition, not self.witnesses, ws, margin)


def _chebyshev_interior(lo: float, hi: float, n: int) -> np.ndarray:
    j = np.arange(1, n + 1)
    nodes = np.cos((2 * j - 1) * np.pi / (2 * n))
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes[::-1]


def _curvature_check(
    chk: _Checker,
    fn: PiecewisePoly,
    lo: float,
    hi: float,
    want_concave: bool,
    strict: bool,
    clause: str,
    grid_size: int,
) -> None:
    """Sign of the second derivative over [lo, hi], piece by piece.

    Weak checks require the correct sign (within tolerance) at Chebyshev
    nodes, piece endpoints and the interior quadratic vertex of f''.  Strict
    checks additionally require a strict sign at the interior nodes; zeros at
    piece or region endpoints are allowed, since a C2 inflection at the region
    boundary necessarily has vanishing curvature there.  Kinks are handled by
    the one-sided slope ordering a concave (convex) function must satisfy.
    """
    sign = -1.0 if want_concave else 1.0
    if hi - lo <= 1e-14:
        return
    n_nodes = max(9, min(33, grid_size // max(1, len(fn.pieces))))
    for k, (x0, x1) in enumerate(zip(fn.breakpoints, fn.breakpoints[1:])):
        p_lo, p_hi = max(x0, lo), min(x1, hi)
        if p_hi - p_lo <= 1e-14:
            continue
        interior = _chebyshev_interior(p_lo, p_hi, n_nodes)
        # take the quadratic vertex of f'' on this piece into account: it is
        # where a sign dip between samples could hide
        d2 = fn._dtabs[2][k]
        extras = [p_lo, p_hi]
        if abs(d2[2]) > 0:
            t_v = -d2[1] / (2.0 * d2[2])
            x_v = fn.breakpoints[k] + t_v
            if p_lo < x_v < p_hi:
                extras.append(x_v)
        for x in np.concatenate([interior, np.asarray(extras)]):
            curv = sign * fn._eval_piece(k, float(x), 2)
            at_edge = abs(x - p_lo) < 1e-14 or abs(x - p_hi) < 1e-14
            if strict and not at_edge:
                chk.record(curv > SIGN_TOL, curv, (float(x),), clause + " (strict)")
            else:
                chk.record(curv >= -SIGN_TOL, curv, (float(x),), clause)
    # slope ordering across interior breakpoints inside the region
    for k in range(len(fn.pieces) - 1):
        xk = fn.breakpoints[k + 1]
        if lo < xk < hi:
            drop = sign * (fn._eval_piece(k + 1, xk, 1) - fn._eval_piece(k, xk, 1))
            chk.record(drop >= -SIGN_TOL, drop, (xk,), clause + " (kink slope order)")


def _ordering_check(
    chk: _Checker,
    lower: PiecewisePoly,
    upper: PiecewisePoly,
    lo: float,
    hi: float,
    strict: bool,
    clause: str,
    grid: np.ndarray,
) -> None:
    mask = (grid >= lo - 1e-15) & (grid <= hi + 1e-15)
    xs = grid[mask]
    if xs.size == 0:
        xs = np.asarray([lo, hi])
    gap = upper.piece_eval(xs) - lower.piece_eval(xs)
    for x, g in zip(xs, gap):
        ok = g > SIGN_TOL if strict else g >= -SIGN_TOL
        chk.record(bool(ok), float(g), (float(x),), clause)


def _quasiconcave_on_grid(values: np.ndarray) -> int:
    """Index of the first interior dip breaking unimodality, or -1 if none."""
    n = values.size
    if n < 3:
        return -1
    prefix = np.maximum.accumulate(values)
    suffix = np.maximum.accumulate(values[::-1])[::-1]
    for j in range(1, n - 1):
        if values[j] < min(prefix[j - 1], suffix[j + 1]) - 1e-12:
            return j
    return -1


def validate(spec: GameSpec, condition: str, grid_size: int = 512) -> ConditionReport:
    """Check one named geometric condition on a grid and report margins.

    Violations are reported as witnesses, never raised.  Conditions:

    * ``A1``: f_i <= h_i <= g_i on [0,1];
    * ``A1p``: if b <= a then additionally g_i > f_i on [b,a];
    * ``G1``: curvature split of f1 at a and of f2 at b, plus the A1p clause;
    * ``G1p``: G1 with a < b, strict curvature, C2 rewards, and a
      nondegeneracy clause keeping best responses away from 0 and 1;
    * ``G2``: the double-interval curvature pattern of f1 (convex, concave,
      convex) split at a1 and a2, and the usual split of f2 at b;
    * ``U``: unimodality of the utility slices on the feasible sections
      (checked through the gnep module's utilities).
    """
    if condition not in CONDITION_NAMES:
        raise ValueError(f"unknown condition {condition!r}; pick from {CONDITION_NAMES}")
    chk = _Checker(condition)
    grid = np.linspace(0.0, 1.0, max(grid_size, 16))

    if condition == "A1":
        for i in (1, 2):
            f, g, h = spec.player(i)
            _ordering_check(chk, f, h, 0.0, 1.0, False, f"f{i} <= h{i}", grid)
            _ordering_check(chk, h, g, 0.0, 1.0, False, f"h{i} <= g{i}", grid)
        return chk.report()

    if condition == "A1p":
        a, b = spec.a2, spec.b
        if b <= a:
            for i in (1, 2):
                f, g, _ = spec.player(i)
                _ordering_check(chk, f, g, b, a, True, f"g{i} > f{i} on [b,a]", grid)
        else:
            chk.record(True, b - a, (a, b), "a < b, clause vacuous")
        return chk.report()

    if condition == "G1":
        a, b = spec.a, spec.b
        _curvature_check(chk, spec.f1, 0.0, a, True, False, "f1 concave on [0,a]", grid_size)
        _curvature_check(chk, spec.f1, a, 1.0, False, False, "f1 convex on [a,1]", grid_size)
        _curvature_check(chk, spec.f2, 0.0, b, False, False, "f2 convex on [0,b]", grid_size)
        _curvature_check(chk, spec.f2, b, 1.0, True, False, "f2 concave on [b,1]", grid_size)
        if b <= a:
            for i in (1, 2):
                f, g, _ = spec.player(i)
                _ordering_check(chk, f, g, b, a, True, f"f{i} < g{i} on [b,a]", grid)
        return chk.report()

    if condition == "G1p":
        a, b = spec.a, spec.b
        chk.record(a < b, b - a, (a, b), "a < b")
        _curvature_check(chk, spec.f1, 0.0, a, True, True, "f1 strictly concave on [0,a]", grid_size)
        _curvature_check(chk, spec.f1, a, 1.0, False, True, "f1 strictly convex on [a,1]", grid_size)
        _curvature_check(chk, spec.f2, 0.0, b, False, True, "f2 strictly convex on [0,b]", grid_size)
        _curvature_check(chk, spec.f2, b, 1.0, True, True, "f2 strictly concave on [b,1]", grid_size)
        for name in ("f1", "g1", "f2", "g2"):
            fn = spec.rewards()[name]
            chk.record(
                fn.smoothness >= 2,
                float(fn.smoothness - 2),
                (0.0,),
                f"{name} is C2 on [0,1]",
            )
        # nondegeneracy: some feasible stop beats waiting out the opponent,
        # uniformly over the opponent's choices
        xs = grid[(grid > 0) & (grid <= a)]
        ys = grid[(grid >= b) & (grid < 1.0)]
        if xs.size and ys.size:
            lead1 = np.max(spec.f1.piece_eval(xs) / xs)
            tail1 = np.max(spec.g1.piece_eval(np.append(ys, 1.0)) / np.append(ys, 1.0))
            chk.record(
                lead1 > tail1 + SIGN_TOL,
                lead1 - tail1,
                (float(a),),
                "exists x with f1(x)/x above g1(y)/y",
            )
            lead2 = np.max(spec.f2.piece_eval(ys) / (1.0 - ys))
            xs0 = np.append(0.0, xs[xs < 1.0])
            tail2 = np.max(spec.g2.piece_eval(xs0) / (1.0 - xs0))
            chk.record(
                lead2 > tail2 + SIGN_TOL,
                lead2 - tail2,
                (float(b),),
                "exists y with f2(y)/(1-y) above g2(x)/(1-x)",
            )
        return chk.report()

    if condition == "G2":
        if not spec.two_interval:
            chk.record(False, -1.0, (0.0,), "geometry must provide (a1, a2, b)")
            return chk.report()
        a1, a2, b = spec.geometry
        _curvature_check(chk, spec.f1, 0.0, a1, False, False, "f1 convex on [0,a1]", grid_size)
        _curvature_check(chk, spec.f1, a1, a2, True, False, "f1 concave on [a1,a2]", grid_size)
        _curvature_check(chk, spec.f1, a2, 1.0, False, False, "f1 convex on [a2,1]", grid_size)
        _curvature_check(chk, spec.f2, 0.0, b, False, False, "f2 convex on [0,b]", grid_size)
        _curvature_check(chk, spec.f2, b, 1.0, True, False, "f2 concave on [b,1]", grid_size)
        return chk.report()

    # condition == "U": unimodality of utility slices on the feasible sections
    from . import gnep  # deferred: gnep depends on this module

    if spec.two_interval:
        igame = gnep.IntervalGame(spec)
        a1, a2, b = spec.geometry
        n_slices = max(16, grid_size // 16)
        m = max(grid_size // 2, 64)

        def slice_check(ts, vals, loc_of, clause):
            j = _quasiconcave_on_grid(vals)
            margin = 0.0 if j < 0 else float(vals[j] - min(vals[j - 1], vals[j + 1]))
            chk.record(j < 0, margin, loc_of(max(j, 0)), clause)

        for z in np.linspace(b, 1.0, n_slices):
            xs = np.linspace(0.0, a2, m)
            slice_check(
                xs, np.asarray(igame.utility1(xs, z)),
                lambda j: (float(xs[j]), float(z)), "interval-lower slice unimodal",
            )
            ys = np.linspace(a1, a2, m)
            slice_check(
                ys, np.asarray(igame.utility2(ys, z)),
                lambda j: (float(ys[j]), float(z)), "interval-upper slice unimodal",
            )
        for y in np.linspace(a1, a2, n_slices):
            zs = np.linspace(b, 1.0, m)
            zs = zs[zs > y + 1e-9]
            slice_check(
                zs, np.asarray(igame.utility3(y, zs)),
                lambda j: (float(y), float(zs[j])), "right-threshold slice unimodal",
            )
        return chk.report()

    game = gnep.ThresholdGame(spec)
    a, b = spec.a2, spec.b
    n_slices = max(16, grid_size // 16)
    for y in np.linspace(b, 1.0, n_slices):
        hi = min(a, y)
        if hi <= 0:
            continue
        xs = np.linspace(0.0, hi, max(grid_size // 2, 64))
        xs = xs[xs < y - 1e-12]
        vals = game.utility1(xs, y)
        j = _quasiconcave_on_grid(vals)
        chk.record(
            j < 0,
            0.0 if j < 0 else float(vals[j] - min(vals[j - 1], vals[j + 1])),
            (float(xs[j]) if j >= 0 else float(hi), float(y)),
            "player-1 slice unimodal",
        )
    for x in np.linspace(0.0, a, n_slices):
        lo = max(b, x)
        ys = np.linspace(lo, 1.0, max(grid_size // 2, 64))
        ys = ys[ys > x + 1e-12]
        vals = game.utility2(x, ys)
        j = _quasiconcave_on_grid(vals)
        chk.record(
            j < 0,
            0.0 if j < 0 else float(vals[j] - min(vals[j - 1], vals[j + 1])),
            (float(x), float(ys[j]) if j >= 0 else float(lo)),
            "player-2 slice unimodal",
        )
    return chk.report()


def validate_all(spec: GameSpec, grid_size: int = 512) -> dict[str, ConditionReport]:
    names = ["A1", "A1p", "U"]
    names.append("G2" if spec.two_interval else "G1")
    if not spec.two_interval:
        names.append("G1p")
    return {name: validate(spec, name, grid_size) for name in names}


# ---------------------------------------------------------------------------
# builtin examples
# ---------------------------------------------------------------------------


def _profile(a: float) -> PiecewisePoly:
    """Strictly concave-then-convex C2 leader reward vanishing at 0 and 1.

    Equals x*(a/2 - x) on [0, a/2]; the curvature then rises linearly to zero
    at the split point a and grows linearly on [a, 1], with the final slope
    chosen so the function returns to zero at 1.
    """
    if not 0.0 < a < 1.0:
        raise SpecFormatError("profile split must be inside (0,1)")
    half = a / 2.0
    kappa = a * (12.0 - 7.0 * a) / (2.0 * (1.0 - a) ** 2)
    p0 = (0.0, half, -1.0)
    p1 = (0.0, -half, -1.0, 2.0 / (3.0 * a))
    p2 = (-5.0 * a * a / 12.0, -a, 0.0, kappa / (6.0 * (1.0 - a)))
    return PiecewisePoly((0.0, half, a, 1.0), (p0, p1, p2), 2)


def _bump(q: float) -> PiecewisePoly:
    """Nonnegative C2 bump: x*(q - x) continued by a quartic tail to zero.

    The parabola is kept up to its C2 matching point and the tail dies at
    s = q/2 + q*sqrt(6/13) with vanishing value, slope and curvature, so the
    function is identically zero from there on.  Requires s < 1.
    """
    L = q * math.sqrt(6.0 / 13.0)
    mid = q / 2.0 + L / 2.0
    stop = q / 2.0 + L
    if stop >= 1.0:
        raise SpecFormatError("bump support would leave [0,1]")
    tail = (
        7.0 * L * L / 24.0,
        -L,
        -1.0,
        20.0 / (3.0 * L),
        -6.0 / (L * L),
    )
    return PiecewisePoly(
        (0.0, mid, stop, 1.0),
        ((0.0, q, -1.0), tail, (0.0,)),
        2,
    )


def _flatten_pieces(center: float, radius: float, amplitude: float):
    """Breakpoints and local pieces of amplitude*psi((x-center)/radius).

    psi is even, C2, supported on [-1,1], with psi(0)=0, psi'(0)=0 and
    psi''(0)=1, built from one cubic and one quartic arc per side.
    """
    d = radius
    s = amplitude

    def scaled(coeffs):
        # coefficients in u = (x - x0)/d -> coefficients in t = x - x0
        return tuple(s * c / d ** k for k, c in enumerate(coeffs))

    # left outer arc on [c-d, c-d/2], local u in [0, 1/2], psi = (17/18)u^3... in
    # mirrored form: psi(-1 + u) = (17/18)u^3 - (4/3)u^4 for u in [0, 1/2]
    left_outer = scaled((0.0, 0.0, 0.0, 17.0 / 18.0, -4.0 / 3.0))
    # left inner arc on [c-d/2, c], local u in [0, 1/2] with t = u - 1/2:
    # psi(t-1/2 ... ) easier direct: psi(v) = v^2/2 + (13/18)v^3 on v in [-1/2,0]
    # local u = v + 1/2: psi = (u-1/2)^2/2 + (13/18)(u-1/2)^3
    u0 = -0.5
    inner = (0.0, 0.0, 0.5, 13.0 / 18.0)  # v-coeffs of v^2/2 + (13/18) v^3
    left_inner = scaled(_shift_coeffs(inner, u0))
    # right inner arc on [c, c+d/2]: psi(v) = v^2/2 - (13/18)v^3, v in [0,1/2]
    right_inner = scaled((0.0, 0.0, 0.5, -13.0 / 18.0))
    # right outer arc on [c+d/2, c+d]: psi(v) = (17/18)(1-v)^3 - (4/3)(1-v)^4,
    # local u = v - 1/2, 1-v = 1/2 - u
    w = _shift_coeffs((0.0, 0.0, 0.0, 17.0 / 18.0, -4.0 / 3.0), 0.5)
    right_outer = scaled(tuple(c if k % 2 == 0 else -c for k, c in enumerate(w)))
    breaks = (center - d, center - d / 2.0, center, center + d / 2.0, center + d)
    pieces = (left_outer, left_inner, right_inner, right_outer)
    return breaks, pieces


def _add_local(fn: PiecewisePoly, breaks, pieces) -> PiecewisePoly:
    """Add a compactly supported piecewise perturbation to fn."""
    support = PiecewisePoly(
        (0.0,) + tuple(breaks) + (1.0,),
        ((0.0,),) + tuple(pieces) + ((0.0,),),
        2,
    )
    return fn + support


def _midpoint(f: PiecewisePoly, g: PiecewisePoly) -> PiecewisePoly:
    return (f + g).scale(0.5)


def builtin_example(name: str, **params) -> GameSpec:
    """Generate one of the packaged example games.

    Names: ``zero_sum``, ``nonzero_sum_gnep_zero``, ``global_stable``,
    ``local_only`` (keyword parameters ``epsilon`` and ``radius``) and
    ``g2_three_player``.  Each result passes its matching condition
    validator; see the tests for the certified properties.
    """
    builders = {
        "zero_sum": _example_zero_sum,
        "nonzero_sum_gnep_zero": _example_gnep_zero,
        "global_stable": _example_global_stable,
        "local_only": _example_local_only,
        "g2_three_player": _example_three_player,
    }
    if name not in builders:
        raise SpecFormatError(
            f"unknown example {name!r}; choose from {sorted(builders)}"
        )
    return builders[name](**params)


def _example_zero_sum(a: float = 0.4, b: float = 0.6) -> GameSpec:
    if not 0 < a < b < 1:
        raise SpecFormatError("zero_sum example needs 0 < a < b < 1")
    f1 = PiecewisePoly(
        (0.0, a, 1.0),
        ((0.0, a, -1.0), (0.0, -(1.0 - a), 1.0)),
        0 if a != 0.5 else 1,
    )
    g1 = PiecewisePoly(
        (0.0, b, 1.0),
        ((0.0, b, -1.0), (0.0, -(1.0 - b), 1.0)),
        0 if b != 0.5 else 1,
    )
    h1 = _midpoint(f1, g1)
    return GameSpec(
        f1=f1, g1=g1, h1=h1,
        f2=-g1, g2=-f1, h2=-h1,
        geometry=(a, b),
    )


def _example_gnep_zero(a: float = 0.3, b: float = 0.7) -> GameSpec:
    """Game whose auxiliary utilities sum to zero while the stopping game
    itself is not zero-sum.  Its equilibrium sits on the strategy boundary."""
    if not 0 < a < b < 1:
        raise SpecFormatError("need 0 < a < b < 1")
    f1 = PiecewisePoly.zero()
    g1 = PiecewisePoly.single((0.0, 1.0, -1.0))  # x(1-x)
    k = 2.0 * (1.0 - a) / (b - a)  # steep enough to stay below x(x-1) on [0,a]
    f2 = PiecewisePoly(
        (0.0, b, 1.0),
        ((0.0, -k * b, k), (0.0,)),
        0,
    )
    g2_knee = a * (a - 1.0)
    g2 = PiecewisePoly(
        (0.0, a, b, 1.0),
        ((0.0, -1.0, 1.0), (g2_knee, -g2_knee / (b - a)), (0.0,)),
        0,
    )
    return GameSpec(
        f1=f1, g1=g1, h1=_midpoint(f1, g1),
        f2=f2, g2=g2, h2=_midpoint(f2, g2),
        geometry=(a, b),
    )


def _example_global_stable(a: float = 0.2, b: float = 0.75) -> GameSpec:
    """Leader parabolas with compactly supported follower rewards.

    The follower rewards vanish on the opponent's strategy set, which caps
    both factors of the stability product well below one (the separation
    b - a > 1/2 enters the bound).  Follower scaling is 1/2.
    """
    if not (b - a > 0.5):
        raise SpecFormatError("global_stable example needs b - a > 1/2")
    f1 = _profile(a)
    g1 = _bump(a).scale(0.5)
    f2 = _profile(1.0 - b).reflect()
    g2 = _bump(1.0 - b).reflect().scale(0.5)
    return GameSpec(
        f1=f1, g1=g1, h1=_midpoint(f1, g1),
        f2=f2, g2=g2, h2=_midpoint(f2, g2),
        geometry=(a, b),
    )


def _local_only_base(a: float = 0.2, b: float = 0.75, couple: float = 0.05) -> GameSpec:
    """Base game for the flattening construction.

    Unlike the globally stable example, the follower rewards are coupled to
    the leaders (g = f + couple * x(1-x)) so that each player's best response
    varies genuinely with the opponent's threshold; the flattening then has a
    full-strength effect on the stability product.
    """
    f1 = _profile(a)
    f2 = _profile(1.0 - b).reflect()
    hump = PiecewisePoly.single((0.0, couple, -couple))
    g1 = f1 + hump
    g2 = f2 + hump
    return GameSpec(
        f1=f1, g1=g1, h1=_midpoint(f1, g1),
        f2=f2, g2=g2, h2=_midpoint(f2, g2),
        geometry=(a, b),
    )


def _example_local_only(
    epsilon: float | None = None,
    radius: float | None = None,
    target_amplification: float = 3.0,
) -> GameSpec:
    """Flatten f2 at the best response to w0 = a, leaving the equilibrium
    and its local contraction rate intact while blowing up the stability
    product at w0.

    ``epsilon`` is the flattened curvature of f2 at y0 (must lie strictly
    between the original curvature and zero); when omitted it is chosen so the
    stability product at w0 has magnitude ``target_amplification``.
    ``radius`` bounds the support of the modification; the default keeps the
    equilibrium threshold r* strictly outside.
    """
    from . import equilibrium, gnep  # deferred import; cycles otherwise

    base = _local_only_base()
    game = gnep.ThresholdGame(base)
    w0 = base.a
    y0 = game.best_response2(w0).point
    sol = equilibrium.gauss_seidel(base)
    r_star = sol.thresholds[-1]

    f2dd = base.f2.piece_eval(y0, 2)
    if epsilon is None:
        x0 = game.best_response1(y0).point
        lead = (base.f1.piece_eval(x0, 1) - base.g1.piece_eval(y0, 1)) / (
            base.f1.piece_eval(x0, 2) * (y0 - x0)
        )
        follow_num = base.g2.piece_eval(w0, 1) - base.f2.piece_eval(y0, 1)
        epsilon = -abs(lead * follow_num / ((y0 - w0) * target_amplification))
        epsilon = max(epsilon, 0.5 * f2dd)  # keep admissible in hard cases
    if not f2dd < epsilon < 0.0:
        raise SpecFormatError(
            f"flattening curvature {epsilon:.4g} must lie in ({f2dd:.4g}, 0)"
        )

    gap = abs(y0 - r_star)
    p_edge = 1.0 - (1.0 - base.b) / 2.0  # onset of the pure-parabola arc of f2
    limit = min(gap / 3.0, (1.0 - y0) / 2.0, (y0 - p_edge) / 2.0)
    if radius is None:
        radius = min(0.01, limit)
    if not 0.0 < radius <= limit:
        raise SpecFormatError(
            f"flattening radius {radius:.4g} must lie in (0, {limit:.4g}]: the "
            "support must exclude r* and stay inside the concave arc"
        )

    amplitude = (epsilon - f2dd) * radius * radius
    breaks, pieces = _flatten_pieces(y0, radius, amplitude)
    f2_new = _add_local(base.f2, breaks, pieces)
    return GameSpec(
        f1=base.f1, g1=base.g1, h1=base.h1,
        f2=f2_new, g2=base.g2, h2=_midpoint(f2_new, base.g2),
        geometry=base.geometry,
    )


def _example_three_player(
    a1: float = 0.15,
    a2: float = 0.35,
    b: float = 0.6,
) -> GameSpec:
    """Leader reward with a convex dip before a concave hump, so player 1
    stops on an interior interval; follower rewards vanish on the relevant
    opponent sets, which keeps the equilibrium algebra well conditioned."""
    if not (a1, a2, b) == (0.15, 0.35, 1.0 - 0.4):
        # general geometries are possible but the packaged curvature profile
        # below is tuned to this split; reject rather than emit a bad spec
        raise SpecFormatError("the packaged double-interval example is fixed at "
                              "(a1, a2, b) = (0.15, 0.35, 0.6)")
    s0 = 0.05     # initial slope of f1
    lam = 2.0     # convex curvature at 0
    mu = 4.0      # concave curvature at the hump centre
    mid = (a1 + a2) / 2.0
    # curvature is piecewise linear and continuous with knots at a1, mid, a2;
    # the final curvature slope is fixed by f1(1) = 0
    f_a1 = s0 * a1 + lam * a1 * a1 / 3.0
    s_a1 = s0 + lam * a1 / 2.0
    t1 = mid - a1
    f_mid = f_a1 + s_a1 * t1 - mu * t1 * t1 / 6.0
    s_mid = s_a1 - mu * t1 / 2.0
    t2 = a2 - mid
    f_a2 = f_mid + s_mid * t2 - mu * t2 * t2 / 3.0
    s_a2 = s_mid - mu * t2 / 2.0
    t3 = 1.0 - a2
    nu = -(f_a2 + s_a2 * t3) * 6.0 / (t3 * t3)
    f1 = PiecewisePoly(
        (0.0, a1, mid, a2, 1.0),
        (
            (0.0, s0, lam / 2.0, -lam / (6.0 * a1)),
            (f_a1, s_a1, 0.0, -mu / (6.0 * t1)),
            (f_mid, s_mid, -mu / 2.0, mu / (6.0 * t2)),
            (f_a2, s_a2, 0.0, nu / (6.0 * t3)),
        ),
        2,
    )
    q = 0.4409  # support parameter: bump dies before b yet majorizes the hump
    g1 = _bump(q)
    f2 = _profile(1.0 - b).reflect()
    g2 = _bump(1.0 - b).reflect().scale(0.5)
    return GameSpec(
        f1=f1, g1=g1, h1=_midpoint(f1, g1),
        f2=f2, g2=g2, h2=_midpoint(f2, g2),
        geometry=(a1, a2, b),
    )
