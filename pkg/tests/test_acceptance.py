"""End-to-end acceptance checks, one numbered criterion per test.

Each test prints a single ``criterion n: PASS/FAIL (...)`` line with the
measured quantities next to their tolerances, then asserts.  Run with
``-s`` to stream the lines; budgets here are generous for desk hardware
but the whole file stays under a couple of minutes.
"""

import dataclasses
import functools
import math
from time import perf_counter

import numpy as np

from dynkin_gnep import harmonic, valuefn
from dynkin_gnep.analysis import global_stability, local_rate, rosen_uniqueness
from dynkin_gnep.equilibrium import (
    certify_three_player,
    dp_policy_iteration,
    gauss_seidel,
    solve,
    solve_three_player,
)
from dynkin_gnep.montecarlo import (
    deviation_scan,
    discounted_exit_estimate,
    verify_payoffs,
)
from dynkin_gnep.rewards import builtin_example
from dynkin_gnep.transform import constant_dynamics, transform_game

ELL_STAR = (1.0 - math.sqrt(0.2)) / 2.0
R_STAR = (1.0 + math.sqrt(0.2)) / 2.0


def _line(n: int, ok: bool, detail: str) -> None:
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {n} failed: {detail}"


@functools.lru_cache(maxsize=None)
def _twenty_starts():
    spec = builtin_example("global_stable")
    rng = np.random.default_rng(2024)
    starts = rng.uniform(0.0, spec.a, 20)
    return tuple(gauss_seidel(spec, start=float(s)) for s in starts)


def test_criterion_1_zero_sum_smooth_fit():
    spec = builtin_example("zero_sum")
    t0 = perf_counter()
    pairs = []
    worst_violation = -math.inf
    for s in (0.0, spec.a / 2.0, spec.a):
        sol, cert = solve(spec, start=s)
        pairs.append(sol.thresholds)
        worst_violation = max(
            worst_violation, cert.max_improvement1, cert.max_improvement2
        )
        certified = cert.ok
    elapsed = perf_counter() - t0
    spread = max(
        max(abs(p[0] - ELL_STAR), abs(p[1] - R_STAR)) for p in pairs
    )
    ell, r = pairs[0]
    fit1 = abs(
        spec.f1.piece_eval(ell, 1) * (r - ell)
        - (spec.g1.piece_eval(r) - spec.f1.piece_eval(ell))
    )
    fit2 = abs(
        spec.f2.piece_eval(r, 1) * (r - ell)
        - (spec.f2.piece_eval(r) - spec.g2.piece_eval(ell))
    )
    rho0 = local_rate(spec, ell, r).rho0
    ok = (
        certified
        and spread < 1e-8
        and worst_violation < 1e-8
        and fit1 < 1e-6
        and fit2 < 1e-6
        and rho0 < 1e-6
        and elapsed < 2.0
    )
    _line(
        1, ok,
        f"pair spread {spread:.1e} (<1e-8), cert violation {worst_violation:.1e} "
        f"(<1e-8), smooth fit {max(fit1, fit2):.1e} (<1e-6), rho0 {rho0:.1e} "
        f"(<1e-6), {elapsed:.2f}s (<2s)",
    )


def test_criterion_2_global_stability():
    spec = builtin_example("global_stable")
    t0 = perf_counter()
    scan = global_stability(spec)
    sols = _twenty_starts()
    ref = sols[0].thresholds
    spread = max(
        max(abs(s.thresholds[0] - ref[0]), abs(s.thresholds[1] - ref[1]))
        for s in sols
    )
    gs = gauss_seidel(spec)
    dp = dp_policy_iteration(spec, tol=1e-8)
    trace_gap = max(
        max(abs(a[0] - b[0]), abs(a[1] - b[1]))
        for a, b in zip(gs.trace, dp.trace)
    )
    elapsed = perf_counter() - t0
    ok = (
        scan.globally_stable
        and scan.sup_value < 1.0
        and len(scan.w_samples) == 1024
        and all(s.converged for s in sols)
        and spread < 1e-8
        and dp.converged
        and trace_gap < 1e-6
        and elapsed < 30.0
    )
    _line(
        2, ok,
        f"sup {scan.sup_value:.2e} (<1), start spread {spread:.1e} (<1e-8), "
        f"dp trace gap {trace_gap:.1e} (<1e-6), {elapsed:.1f}s (<30s)",
    )


def test_criterion_3_local_only_dichotomy():
    spec = builtin_example("local_only")
    sol, _ = solve(spec)
    rho0 = local_rate(spec, *sol.thresholds).rho0
    scan = global_stability(spec)
    ok = rho0 < 1.0 and scan.sup_value >= 1.0 and not scan.globally_stable
    _line(
        3, ok,
        f"rho0 {rho0:.4f} (<1) while sup {scan.sup_value:.4f} (>=1)",
    )


def test_criterion_4_majorant_matches_closed_maps():
    xs = np.linspace(0.0, 1.0, 4096)
    worst = -math.inf
    for name in ("zero_sum", "global_stable", "local_only", "nonzero_sum_gnep_zero"):
        spec = builtin_example(name)
        sol, cert = solve(spec)
        assert cert.ok, f"{name} did not certify"
        ell, r = sol.thresholds
        v1 = valuefn.player1_problem(spec, r, 4096)
        m1 = harmonic.two_threshold_payoff(spec.f1, spec.g1, ell, r)
        v2 = valuefn.player2_problem(spec, ell, 4096)
        m2 = harmonic.two_threshold_payoff(spec.g2, spec.f2, ell, r)
        worst = max(
            worst,
            float(np.max(np.abs(v1.full_value(xs) - m1.piece_eval(xs)))),
            float(np.max(np.abs(v2.full_value(xs) - m2.piece_eval(xs)))),
        )
    spec3 = builtin_example("g2_three_player")
    three = solve_three_player(spec3)
    l1, l2, r3 = three.thresholds
    vi = valuefn.player1_interval_problem(spec3, r3, 4096)
    mi = harmonic.interval_threshold_payoff(spec3.f1, spec3.g1, l1, l2, r3)
    gap3 = float(np.max(np.abs(vi.full_value(xs) - mi.piece_eval(xs))))
    ok = worst < 1e-6 and gap3 < 1e-6
    _line(
        4, ok,
        f"two-threshold sup gap {worst:.1e} (<1e-6) over 4 specs, "
        f"two-interval sup gap {gap3:.1e} (<1e-6)",
    )


def test_criterion_5_monte_carlo_cross_validation():
    spec = builtin_example("zero_sum")
    t0 = perf_counter()
    sol, _ = solve(spec)
    ell, r = sol.thresholds
    check = verify_payoffs(spec, ell, r, paths=100_000, dt=1e-4, seed=42)
    pay_units = max(
        max(
            abs(rep.payoff1.value - rep.closed_payoff1) / rep.payoff1.se,
            abs(rep.payoff2.value - rep.closed_payoff2) / rep.payoff2.se,
        )
        for rep in check.reports
    )
    hit_units = max(
        abs(rep.low_hit.value - rep.closed_low_hit) / rep.low_hit.se
        for rep in check.reports
    )
    scan = deviation_scan(spec, ell, r, player=1, paths=100_000, dt=1e-4, seed=42)
    scan_units = max(
        (p.improvement / p.se if p.se > 0.0 else 0.0) for p in scan.points
    )
    elapsed = perf_counter() - t0
    ok = (
        check.ok
        and len(check.reports) == 10
        and pay_units <= 3.0
        and hit_units <= 3.0
        and scan.ok
        and len(scan.points) == 50
        and scan_units <= 3.0
        and elapsed < 60.0
    )
    _line(
        5, ok,
        f"payoff {pay_units:.2f} SE, hit {hit_units:.2f} SE, deviation "
        f"{scan_units:.2f} SE (all <=3), {elapsed:.1f}s (<60s)",
    )


def test_criterion_6_rosen_uniqueness():
    spec = builtin_example("global_stable")
    rosen = rosen_uniqueness(spec)
    sols = _twenty_starts()
    ref = sols[0].thresholds
    spread = max(
        max(abs(s.thresholds[0] - ref[0]), abs(s.thresholds[1] - ref[1]))
        for s in sols
    )
    degenerate = rosen_uniqueness(builtin_example("zero_sum"), weights=(0.0, 1.0))
    ok = (
        rosen.holds
        and rosen.min_margin > 0.0
        and spread < 1e-8
        and degenerate.min_margin <= 0.0
    )
    _line(
        6, ok,
        f"margin {rosen.min_margin:.4f} (>0) at weights {rosen.weights}, "
        f"20-start spread {spread:.1e} (<1e-8), degenerate-weight expression "
        f"{degenerate.min_margin:.2f} (<=0)",
    )


def test_criterion_7_transforms():
    spec = builtin_example("zero_sum")
    drifted = transform_game(spec, constant_dynamics(1.0, 1.0))
    zs = np.linspace(0.0, 1.0, 2001)
    closed = (1.0 - np.exp(-2.0 * zs)) / (1.0 - math.exp(-2.0))
    map_err = float(np.max(np.abs(drifted.forward(zs) - closed)))
    scale_res = drifted.checks.scale_residual

    killed = transform_game(
        dataclasses.replace(spec, discount=0.5), constant_dynamics(0.0, 1.0)
    )
    rise_res = killed.checks.rising_residual
    fall_res = killed.checks.falling_residual
    increasing = killed.scale_map.strictly_increasing

    sol, cert = solve(killed.game)
    lo, hi = killed.unmap_thresholds(*sol.thresholds)
    z0 = 0.4
    closed_pay = killed.pull_back_payoffs(z0, lo, hi)[0]
    est = discounted_exit_estimate(
        constant_dynamics(0.0, 1.0), 0.5, z0, lo, hi,
        float(spec.f1.piece_eval(lo)), float(spec.g1.piece_eval(hi)),
        paths=100_000, dt=1e-4, seed=42,
    )
    mc_units = abs(est.value - closed_pay) / est.se
    ok = (
        map_err <= 1e-8
        and scale_res < 1e-6
        and rise_res < 1e-6
        and fall_res < 1e-6
        and increasing
        and cert.ok
        and mc_units <= 3.0
    )
    _line(
        7, ok,
        f"scale map err {map_err:.1e} (<=1e-8), generator residual "
        f"{scale_res:.1e} (<1e-6), eigen residuals {max(rise_res, fall_res):.1e} "
        f"(<1e-6), map increasing {increasing}, discounted MC {mc_units:.2f} SE "
        f"(<=3)",
    )


def test_criterion_8_three_player():
    spec = builtin_example("g2_three_player")
    sol = solve_three_player(spec)
    l1, l2, r = sol.thresholds
    cert = certify_three_player(spec, sol.thresholds, grid=2048)
    vi = valuefn.player1_interval_problem(spec, r, 2048)
    interior = [c for c in vi.contact if c[0] > 1e-9]
    edge_err = math.inf
    if len(interior) == 1:
        edge_err = max(abs(interior[0][0] - l1), abs(interior[0][1] - l2))
    ok = (
        sol.converged
        and cert.ok
        and cert.interval_in_bounds
        and cert.u2_value >= 0.0
        and cert.grid_size == 2048
        and len(interior) == 1
        and edge_err < 1e-4
    )
    _line(
        8, ok,
        f"triple ({l1:.6f}, {l2:.6f}, {r:.6f}), improvements <= "
        f"{max(cert.max_improvement1, cert.max_improvement2, cert.max_improvement3):.1e}, "
        f"u2 {cert.u2_value:.4f} (>=0), contact edge error {edge_err:.1e} (<1e-4)",
    )
