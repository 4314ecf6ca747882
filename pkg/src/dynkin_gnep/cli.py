"""Command line front end.

One command per process.  A game description is read from a JSON file (or
stdin when the path is ``-`` or omitted), the requested pipeline runs, and a
report plus any figures land in the output directory; the primary artifact is
also printed to stdout so commands compose in pipes.  Status text goes to
stderr.

Exit codes: 0 success, 2 malformed input, 3 violated game condition,
4 solver non-convergence, 5 failed certification or failed empirical check.

Reports are byte identical for identical invocations.  The ``timings``
section therefore holds deterministic work counters (iterations, grid sizes,
path counts) rather than wall-clock times, which could never satisfy that
guarantee.  ``DYNKIN_THREADS`` caps the numeric thread pools and must take
effect before the numeric modules load, which is why the heavy imports sit
inside the handlers.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass

EXIT_OK = 0
EXIT_BAD_SPEC = 2
EXIT_CONDITION = 3
EXIT_NO_CONVERGENCE = 4
EXIT_CERTIFICATION = 5

DEFAULT_GRID = 4096
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
DEFAULT_PATHS = 100_000
DEFAULT_DT = 1e-4
DEFAULT_SEED = 42

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


class CommandError(Exception):
    """A failure with a dedicated exit code and a one-line reason."""

    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


@dataclass
class RunReport:
    """Everything one command run decided, in serializable form.

    The eight sections are always present; sections a command does not
    produce stay null.  Every numeric entry inside the sections carries the
    tolerance its check used.  ``to_dict``/``from_dict`` round trip losslessly
    through JSON.
    """

    spec_digest: str
    conditions: dict | None = None
    equilibrium: dict | None = None
    certificate: dict | None = None
    stability: dict | None = None
    rosen: dict | None = None
    mc: dict | None = None
    timings: dict | None = None

    def to_dict(self) -> dict:
        return {
            "spec_digest": self.spec_digest,
            "conditions": self.conditions,
            "equilibrium": self.equilibrium,
            "certificate": self.certificate,
            "stability": self.stability,
            "rosen": self.rosen,
            "mc": self.mc,
            "timings": self.timings,
        }

    @staticmethod
    def from_dict(data: dict) -> "RunReport":
        return RunReport(**{k: data.get(k) for k in (
            "spec_digest", "conditions", "equilibrium", "certificate",
            "stability", "rosen", "mc", "timings",
        )})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _cap_threads() -> None:
    cap = os.environ.get("DYNKIN_THREADS")
    if cap:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, cap)


def _load_spec(args):
    from . import rewards

    path = getattr(args, "spec", None)
    try:
        if path is None or path == "-":
            try:
                data = json.load(sys.stdin)
            except json.JSONDecodeError as exc:
                raise rewards.SpecFormatError(f"stdin is not valid JSON: {exc}")
            return rewards.spec_from_dict(data)
        return rewards.load_spec(path)
    except OSError as exc:
        raise CommandError(EXIT_BAD_SPEC, f"cannot read game description: {exc}")
    except rewards.SpecError as exc:
        raise CommandError(EXIT_BAD_SPEC, f"invalid game description: {exc}")


def _conditions(spec, grid: int) -> dict:
    from . import rewards

    return rewards.validate_all(spec, grid_size=min(grid, 1024))


def _gate(conditions: dict, spec) -> None:
    """Refuse to solve when a required structural condition fails."""
    required = ["A1", "G2" if spec.two_interval else "G1"]
    for name in required:
        rep = conditions[name]
        if not rep.holds:
            w = rep.witnesses[0]
            loc = ", ".join(f"{v:.6g}" for v in w.location)
            raise CommandError(
                EXIT_CONDITION,
                f"condition {name} fails: {w.clause} at ({loc}), "
                f"margin {w.margin:.3g} below tolerance {rep.tolerance:g}",
            )


def _conditions_dict(conditions: dict) -> dict:
    return {name: rep.to_dict() for name, rep in conditions.items()}


def _out_dir(args) -> str:
    cached = getattr(args, "_out_cache", None)
    if cached is not None:
        return cached
    if args.out:
        path = args.out
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = os.path.join("runs", f"{args.command}-{stamp}-{os.getpid()}")
    os.makedirs(path, exist_ok=True)
    args._out_cache = path
    return path


def _emit(args, report: RunReport, artifact: str | None = None) -> None:
    """Write the report into the out dir and the primary artifact to stdout."""
    out = _out_dir(args)
    text = report.to_json()
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(text)
    if artifact is None:
        if args.format == "csv":
            artifact = _report_csv(report)
            with open(os.path.join(out, "report.csv"), "w") as fh:
                fh.write(artifact)
        else:
            artifact = text
    sys.stdout.write(artifact)
    print(f"wrote {out}", file=sys.stderr)


def _report_csv(report: RunReport) -> str:
    rows = [("key", "value")]

    def walk(prefix: str, value) -> None:
        if isinstance(value, dict):
            for k, v in value.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        else:
            rows.append((prefix, json.dumps(value)))

    walk("", report.to_dict())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _solve_certified(spec, args):
    """Shared solve + certify step with the contract exit codes."""
    from . import equilibrium

    try:
        sol, cert = equilibrium.solve(
            spec,
            start=args.start,
            tol=args.tol,
            max_iter=args.max_iter,
            grid=args.grid,
        )
    except equilibrium.ConvergenceError as exc:
        raise CommandError(
            EXIT_NO_CONVERGENCE,
            f"best-response iteration failed on the lower threshold: {exc}",
        )
    if not cert.ok:
        raise CommandError(EXIT_CERTIFICATION, _cert_reason(cert))
    return sol, cert


def _cert_reason(cert) -> str:
    if cert.max_improvement1 > cert.improvement_tolerance:
        return (
            f"certification failed: player 1 deviation improves by "
            f"{cert.max_improvement1:.3g} > tolerance {cert.improvement_tolerance:g}"
        )
    if cert.max_improvement2 > cert.improvement_tolerance:
        return (
            f"certification failed: player 2 deviation improves by "
            f"{cert.max_improvement2:.3g} > tolerance {cert.improvement_tolerance:g}"
        )
    return (
        f"certification failed: value-function gap "
        f"({cert.value_gap1:.3g}, {cert.value_gap2:.3g}) exceeds tolerance "
        f"{cert.value_tolerance:g}"
    )


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def _cmd_example(args) -> int:
    from . import rewards

    try:
        spec = rewards.builtin_example(args.name)
    except rewards.SpecError as exc:
        raise CommandError(EXIT_BAD_SPEC, str(exc))
    sys.stdout.write(json.dumps(spec.to_dict(), indent=2) + "\n")
    return EXIT_OK


def _cmd_validate(args) -> int:
    spec = _load_spec(args)
    conditions = _conditions(spec, args.grid)
    report = RunReport(
        spec_digest=spec.digest(),
        conditions=_conditions_dict(conditions),
        timings={"grid": min(args.grid, 1024), "conditions": len(conditions)},
    )
    if not args.no_figures:
        from . import figures

        figures.reward_figure(spec, os.path.join(_out_dir(args), "rewards.png"))
    _emit(args, report)
    _gate(conditions, spec)
    return EXIT_OK


def _cmd_solve(args) -> int:
    spec = _load_spec(args)
    conditions = _conditions(spec, args.grid)
    _gate(conditions, spec)
    if args.three_player:
        return _solve_three(args, spec, conditions)
    from . import analysis

    sol, cert = _solve_certified(spec, args)
    ell, r = sol.thresholds
    eq = sol.to_dict()
    del eq["trace"]
    stability = analysis.local_rate(spec, ell, r).to_dict()
    report = RunReport(
        spec_digest=spec.digest(),
        conditions=_conditions_dict(conditions),
        equilibrium=eq,
        certificate=cert.to_dict(),
        stability=stability,
        timings={
            "grid": args.grid,
            "iterations": sol.iterations,
            "tolerance": args.tol,
        },
    )
    if not args.no_figures:
        from . import figures, valuefn

        out = _out_dir(args)
        figures.payoff_figure(spec, ell, r, os.path.join(out, "payoff.png"))
        figures.value_figure(
            valuefn.player1_problem(spec, r, args.grid),
            os.path.join(out, "value1.png"),
            "player 1 stopping problem",
        )
        figures.value_figure(
            valuefn.player2_problem(spec, ell, args.grid),
            os.path.join(out, "value2.png"),
            "player 2 stopping problem",
        )
    _emit(args, report)
    return EXIT_OK


def _solve_three(args, spec, conditions) -> int:
    from . import equilibrium

    sol = equilibrium.solve_three_player(
        spec, tol=args.tol, max_iter=args.max_iter
    )
    if not sol.converged:
        raise CommandError(
            EXIT_NO_CONVERGENCE,
            f"three-player iteration did not converge in {sol.iterations} sweeps "
            f"(last movement {sol.residuals[-1]:.3g}, tolerance {args.tol:g})",
        )
    cert = equilibrium.certify_three_player(
        spec, sol.thresholds, grid=min(args.grid, 2048)
    )
    if not cert.ok:
        detail = "middle utility negative" if not cert.u2_nonnegative else (
            f"max deviation improvement "
            f"{max(cert.max_improvement1, cert.max_improvement2, cert.max_improvement3):.3g}"
            f" > tolerance {cert.improvement_tolerance:g}"
        )
        raise CommandError(EXIT_CERTIFICATION, f"certification failed: {detail}")
    eq = sol.to_dict()
    del eq["trace"]
    report = RunReport(
        spec_digest=spec.digest(),
        conditions=_conditions_dict(conditions),
        equilibrium=eq,
        certificate=cert.to_dict(),
        timings={
            "grid": min(args.grid, 2048),
            "iterations": sol.iterations,
            "tolerance": args.tol,
        },
    )
    if not args.no_figures:
        from . import figures, valuefn

        figures.value_figure(
            valuefn.player1_interval_problem(spec, sol.thresholds[2], args.grid),
            os.path.join(_out_dir(args), "value1.png"),
            "middle-interval stopping problem",
        )
    _emit(args, report)
    return EXIT_OK


def _cmd_iterate(args) -> int:
    from . import equilibrium

    spec = _load_spec(args)
    conditions = _conditions(spec, args.grid)
    _gate(conditions, spec)
    sol = equilibrium.gauss_seidel(
        spec, start=args.start, tol=args.tol, max_iter=args.max_iter
    )
    report = RunReport(
        spec_digest=spec.digest(),
        conditions=_conditions_dict(conditions),
        equilibrium=sol.to_dict(),
        timings={"iterations": sol.iterations, "tolerance": args.tol},
    )
    if not args.no_figures and sol.trace:
        from . import figures

        figures.trace_figure(sol, os.path.join(_out_dir(args), "trace.png"))
    _emit(args, report)
    if not sol.converged:
        raise CommandError(
            EXIT_NO_CONVERGENCE,
            f"no fixed point within {sol.iterations} sweeps "
            f"(last lower-threshold movement {sol.residuals[-1]:.3g}, "
            f"tolerance {args.tol:g}"
            + (", period-2 cycling detected)" if sol.cycling else ")"),
        )
    return EXIT_OK


def _cmd_stability(args) -> int:
    from . import analysis

    spec = _load_spec(args)
    conditions = _conditions(spec, args.grid)
    _gate(conditions, spec)
    sol, cert = _solve_certified(spec, args)
    ell, r = sol.thresholds
    local = analysis.local_rate(spec, ell, r)
    global_rep = analysis.global_stability(spec, wgrid=args.grid)
    eq = sol.to_dict()
    del eq["trace"]
    report = RunReport(
        spec_digest=spec.digest(),
        conditions=_conditions_dict(conditions),
        equilibrium=eq,
        certificate=cert.to_dict(),
        stability={"local": local.to_dict(), "global": global_rep.to_dict()},
        timings={
            "grid": args.grid,
            "iterations": sol.iterations,
            "anchor_grid": global_rep.grid_size,
        },
    )
    if not args.no_figures:
        from . import figures

        figures.stability_figure(
            global_rep, os.path.join(_out_dir(args), "stability.png")
        )
    _emit(args, report)
    return EXIT_OK


def _cmd_uniqueness(args) -> int:
    from . import analysis

    spec = _load_spec(args)
    conditions = _conditions(spec, args.grid)
    _gate(conditions, spec)
    rosen = analysis.rosen_uniqueness(spec, grid=min(args.grid, 256))
    report = RunReport(
        spec_digest=spec.digest(),
        conditions=_conditions_dict(conditions),
        rosen=rosen.to_dict(),
        timings={"grid": min(args.grid, 256)},
    )
    _emit(args, report)
    return EXIT_OK


def _cmd_value(args) -> int:
    from . import valuefn

    spec = _load_spec(args)
    conditions = _conditions(spec, args.grid)
    _gate(conditions, spec)
    if args.region:
        try:
            lo_s, hi_s = args.region.split(",")
            ell, r = float(lo_s), float(hi_s)
        except ValueError:
            raise CommandError(
                EXIT_BAD_SPEC, "--region expects two floats 'lower,upper'"
            )
        if not 0.0 <= ell < r <= 1.0:
            raise CommandError(
                EXIT_BAD_SPEC, "--region must satisfy 0 <= lower < upper <= 1"
            )
        eq = None
        cert_dict = None
    else:
        sol, cert = _solve_certified(spec, args)
        ell, r = sol.thresholds
        eq = sol.to_dict()
        del eq["trace"]
        cert_dict = cert.to_dict()
    if spec.two_interval:
        if args.player != 1:
            raise CommandError(
                EXIT_BAD_SPEC,
                "two-interval games expose the value table for player 1 only",
            )
        sol_v = valuefn.player1_interval_problem(spec, r, args.grid)
    elif args.player == 1:
        sol_v = valuefn.player1_problem(spec, r, args.grid)
    else:
        sol_v = valuefn.player2_problem(spec, ell, args.grid)
    mask = sol_v.contact_mask()
    lines = ["x,obstacle,value,in_contact\n"]
    for x, ob, v, c in zip(sol_v.xs, sol_v.obstacle, sol_v.value, mask):
        lines.append(f"{float(x)!r},{float(ob)!r},{float(v)!r},{int(c)}\n")
    table = "".join(lines)
    eq = dict(eq) if eq else {"thresholds": [ell, r]}
    eq["contact_intervals"] = [list(c) for c in sol_v.contact]
    report = RunReport(
        spec_digest=spec.digest(),
        conditions=_conditions_dict(conditions),
        equilibrium=eq,
        certificate=cert_dict,
        stability=None,
        timings={"grid": args.grid, "player": args.player},
    )
    out = _out_dir(args)
    with open(os.path.join(out, "value.csv"), "w") as fh:
        fh.write(table)
    if not args.no_figures:
        from . import figures

        figures.value_figure(
            sol_v,
            os.path.join(out, "value.png"),
            f"player {args.player} stopping problem",
        )
    _emit(args, report, artifact=table if args.format == "csv" else None)
    return EXIT_OK


def _cmd_transform(args) -> int:
    from . import equilibrium, transform

    spec = _load_spec(args)
    conditions = _conditions(spec, args.grid)
    if args.dynamics:
        try:
            with open(args.dynamics) as fh:
                dyn = transform.DiffusionSpec.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CommandError(EXIT_BAD_SPEC, f"bad dynamics file: {exc}")
    else:
        dyn = transform.constant_dynamics(args.drift, args.vol)
    try:
        result = transform.transform_game(spec, dyn)
    except transform.TransformError as exc:
        raise CommandError(EXIT_BAD_SPEC, f"reduction rejected: {exc}")
    rep_a1 = conditions["A1"]
    if not rep_a1.holds:
        w = rep_a1.witnesses[0]
        loc = ", ".join(f"{v:.6g}" for v in w.location)
        raise CommandError(
            EXIT_CONDITION,
            f"condition A1 fails: {w.clause} at ({loc}), margin {w.margin:.3g}",
        )
    cond_dict = _conditions_dict(conditions)
    cond_dict["transform"] = result.checks.to_dict()
    if not result.checks.ok:
        raise CommandError(
            EXIT_CERTIFICATION,
            "transform residual checks failed: "
            + json.dumps(result.checks.to_dict()),
        )
    mapped = result.game
    # Curvature conditions live in the transformed scale, and the refit image
    # carries kink-scale wiggles of the order of the fit tolerance, so the
    # image game is certified through its equilibrium rather than gated here.
    cond_dict["mapped"] = _conditions_dict(_conditions(mapped, args.grid))
    try:
        sol, cert = equilibrium.solve(
            mapped, tol=args.tol, max_iter=args.max_iter, grid=args.grid
        )
    except equilibrium.ConvergenceError as exc:
        raise CommandError(EXIT_NO_CONVERGENCE, f"transformed game: {exc}")
    if not cert.ok:
        raise CommandError(
            EXIT_CERTIFICATION, "transformed game: " + _cert_reason(cert)
        )
    src = result.unmap_thresholds(*sol.thresholds)
    eq = sol.to_dict()
    del eq["trace"]
    eq["mapped_thresholds"] = list(sol.thresholds)
    eq["source_thresholds"] = list(src)
    report = RunReport(
        spec_digest=spec.digest(),
        conditions=cond_dict,
        equilibrium=eq,
        certificate=cert.to_dict(),
        timings={
            "grid": args.grid,
            "iterations": sol.iterations,
            "march_steps": dict(result.checks.steps),
        },
    )
    if not args.no_figures:
        from . import figures

        figures.transform_figure(
            result, os.path.join(_out_dir(args), "transform.png")
        )
    _emit(args, report)
    return EXIT_OK


def _cmd_mc_verify(args) -> int:
    from . import montecarlo

    spec = _load_spec(args)
    conditions = _conditions(spec, args.grid)
    _gate(conditions, spec)
    sol, cert = _solve_certified(spec, args)
    ell, r = sol.thresholds
    check = montecarlo.verify_payoffs(
        spec, ell, r, paths=args.paths, dt=args.dt, seed=args.seed
    )
    mc = {"payoffs": check.to_dict()}
    scan = None
    if args.scan:
        scan = montecarlo.deviation_scan(
            spec, ell, r, player=args.player,
            paths=args.paths, dt=args.dt, seed=args.seed,
        )
        mc["deviations"] = scan.to_dict()
    eq = sol.to_dict()
    del eq["trace"]
    report = RunReport(
        spec_digest=spec.digest(),
        conditions=_conditions_dict(conditions),
        equilibrium=eq,
        certificate=cert.to_dict(),
        mc=mc,
        timings={
            "paths": args.paths,
            "dt": args.dt,
            "seed": args.seed,
            "starts": len(check.reports),
        },
    )
    if not args.no_figures:
        from . import figures

        out = _out_dir(args)
        figures.mc_figure(check, os.path.join(out, "mc.png"))
        if scan is not None:
            figures.deviation_figure(scan, os.path.join(out, "deviation.png"))
    _emit(args, report)
    if not check.ok:
        bad = next(r for r in check.reports if not r.ok)
        raise CommandError(
            EXIT_CERTIFICATION,
            f"simulation disagrees with closed form at start {bad.start:.6g} "
            f"(payoff1 {bad.payoff1.value:.6g} vs {bad.closed_payoff1:.6g}, "
            f"3 SE = {3 * bad.payoff1.se:.3g})",
        )
    if scan is not None and not scan.ok:
        bad_p = max(scan.points, key=lambda p: p.improvement)
        raise CommandError(
            EXIT_CERTIFICATION,
            f"simulated deviation to {bad_p.threshold:.6g} improves player "
            f"{scan.player} payoff by {bad_p.improvement:.3g} "
            f"(> 3 SE = {3 * bad_p.se:.3g})",
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynkin",
        description=(
            "Compute, certify and stress-test threshold equilibria of "
            "two-player stopping games on the unit interval."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, spec_arg: bool = True) -> None:
        if spec_arg:
            p.add_argument(
                "spec", nargs="?", default=None,
                help="game description JSON (default: stdin)",
            )
        p.add_argument("--grid", type=int, default=DEFAULT_GRID)
        p.add_argument("--tol", type=float, default=DEFAULT_TOL)
        p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--paths", type=int, default=DEFAULT_PATHS)
        p.add_argument("--dt", type=float, default=DEFAULT_DT)
        p.add_argument(
            "--start", type=float, default=None,
            help="initial lower threshold for the iteration",
        )
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("validate", help="check the structural conditions")
    common(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("solve", help="find and certify an equilibrium")
    common(p)
    p.add_argument("--three-player", action="store_true")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("iterate", help="run best responses and keep the trace")
    common(p)
    p.set_defaults(func=_cmd_iterate)

    p = sub.add_parser("stability", help="local and global contraction rates")
    common(p)
    p.set_defaults(func=_cmd_stability, grid=1024)

    p = sub.add_parser("uniqueness", help="diagonal concavity criterion")
    common(p)
    p.set_defaults(func=_cmd_uniqueness)

    p = sub.add_parser("value", help="value-function table for one player")
    common(p)
    p.add_argument(
        "--region", default=None,
        help="threshold pair 'lower,upper'; omitted means solve first",
    )
    p.add_argument("--player", type=int, choices=(1, 2), default=1)
    p.set_defaults(func=_cmd_value)

    p = sub.add_parser(
        "transform", help="reduce a diffusion game and solve the image"
    )
    common(p)
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--vol", type=float, default=1.0)
    p.add_argument(
        "--dynamics", default=None, help="diffusion coefficients JSON file"
    )
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("mc-verify", help="simulate and compare closed forms")
    common(p)
    p.add_argument("--scan", action="store_true", help="add a deviation scan")
    p.add_argument("--player", type=int, choices=(1, 2), default=1)
    p.set_defaults(func=_cmd_mc_verify)

    p = sub.add_parser("example", help="print a packaged game description")
    p.add_argument("--name", required=True)
    p.set_defaults(func=_cmd_example)

    return parser


def main(argv=None) -> int:
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
