"""``haplobench`` command-line front end.

Exit codes: 0 success / all checks pass, 1 a calibration check failed (or
the light never reaches an eye), 2 config or flag error, 3 solver did not
converge, 4 internal or I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
import traceback
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .bench import BenchInvariantError, FoldFailure, configure_for_user, intended_mismatch, set_focal_distance, simulate_stimulus
from .calibration import Tolerances, run_checklist
from .config import ConfigError, Diagnostic, bench_fingerprint, fingerprint, parse_bench_config, save_bench
from .dofs import DofPathError
from .report import make_report, write_report
from .solver import AdjustableSet, solve_calibration
from .svg import render_svg
from .tolerance import EmptyStatsError, load_perturbation_spec, monte_carlo_tolerance

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_INTERNAL = 4


class UsageError(Exception):
    """Bad flag value or input file; exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _distance(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected metres or 'inf', got {text!r}") from None
    if math.isnan(v) or v <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0 metres or 'inf', got {text!r}")
    return v


def _positive_metres(text: str) -> float:
    v = _distance(text)
    if math.isinf(v):
        raise argparse.ArgumentTypeError(f"must be a finite length in metres, got {text!r}")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text!r}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an unsigned 64-bit integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"must be in [0, 2^64), got {text!r}")
    return v


def _paths(text: str) -> list[str]:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list of DOF paths")
    return items


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="haplobench", description="Haploscope optics, calibration and tolerance workbench.")
    p.add_argument("--version", action="version", version=f"haplobench {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(sp, *, user=False):
        sp.add_argument("config", help="bench config file (TOML)")
        sp.add_argument("--report", metavar="FILE", help="write a JSON report here")
        if user:
            sp.add_argument("--ipd", type=_positive_metres, metavar="M", help="user IPD in metres")
            sp.add_argument("--focal", type=_distance, metavar="M", help="presented focal distance (metres or inf)")
            sp.add_argument("--vergence", type=_distance, metavar="M", help="vergence distance (metres or inf)")

    common(sub.add_parser("validate", help="parse and check a config file"))
    common(sub.add_parser("simulate", help="perceived stimulus and mismatch"), user=True)
    sp = sub.add_parser("verify", help="run the five-step calibration checklist")
    common(sp)
    sp.add_argument("--ipd", type=_positive_metres, metavar="M", help="user IPD for step 5 (default: bench IPD)")
    sp.add_argument("--tolerances", metavar="FILE", help="tolerance overrides ([tolerances] table)")
    sp = sub.add_parser("solve", help="least-squares alignment over chosen DOFs")
    common(sp)
    sp.add_argument("--adjust", type=_paths, required=True, metavar="PATHS", help="comma-separated DOF paths")
    sp.add_argument("--ipd", type=_positive_metres, metavar="M", help="user IPD for step 5 (default: bench IPD)")
    sp.add_argument("--max-iters", type=_count, default=200, metavar="N")
    sp.add_argument("--out", metavar="FILE", help="write the solved bench config here")
    sp = sub.add_parser("tolerance", help="Monte Carlo tolerance study")
    common(sp)
    sp.add_argument("--spec", required=True, metavar="FILE", help="perturbation spec (TOML)")
    sp.add_argument("--trials", type=_count, default=1000, metavar="N")
    sp.add_argument("--seed", type=_seed, default=0, metavar="U64")
    sp.add_argument("--workers", type=_count, default=1, metavar="N")
    sp = sub.add_parser("render", help="top-down SVG ray diagram")
    common(sp, user=True)
    sp.add_argument("--out", required=True, metavar="FILE", help="SVG output path")
    return p


def _read(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror or exc}") from None


def _load_tolerances(path: str | None) -> Tolerances:
    if path is None:
        return Tolerances()
    text = _read(path, "tolerances file")
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([Diagnostic("syntax", "<tolerances>", str(exc))]) from None
    extra = sorted(set(raw) - {"tolerances"})
    if extra:
        raise ConfigError([Diagnostic("unknown-field", extra[0], "only a [tolerances] table is allowed")])
    try:
        return Tolerances.from_mapping(raw.get("tolerances", {}))
    except ValueError as exc:
        raise ConfigError([Diagnostic("invariant", "tolerances", str(exc))]) from None


def _user_bench(bench, args):
    ipd = args.ipd if getattr(args, "ipd", None) is not None else bench.ipd_m
    vergence = args.vergence if getattr(args, "vergence", None) is not None else bench.vergence_distance_m
    if getattr(args, "ipd", None) is not None or getattr(args, "vergence", None) is not None:
        try:
            bench = configure_for_user(bench, ipd, vergence)
        except ValueError as exc:
            raise UsageError(f"--ipd: {exc}") from None
    if getattr(args, "focal", None) is not None:
        bench = set_focal_distance(bench, args.focal)
    return bench


def _fmt_num(v: float) -> str:
    return f"{v:.6g}"


def _cmd_validate(bench, args, out):
    out.append(f"ok: {args.config}")
    out.append(f"  ipd {_fmt_num(bench.ipd_m)} m, focal {_fmt_num(bench.focal_distance_m)} m, vergence {_fmt_num(bench.vergence_distance_m)} m")
    for side in ("left", "right"):
        w = bench.wing(side)
        powers = ", ".join(f"{l.role} {_fmt_num(l.power_diopters)} D" for l in w.lenses)
        out.append(f"  {side}: inward {_fmt_num(w.rail_azimuth_deg)} deg; {powers}")
    return EXIT_OK, {"valid": True}


def _cmd_simulate(bench, args, out):
    bench = _user_bench(bench, args)
    try:
        stim = simulate_stimulus(bench)
    except FoldFailure as exc:
        out.append(f"fold failure: {exc}")
        return EXIT_CHECK_FAILED, {"fold_failure": str(exc)}
    mm = intended_mismatch(bench, stim)
    for side in ("left", "right"):
        e = stim.eye(side)
        out.append(
            f"{side}: focal demand {_fmt_num(e.focal_demand)} D, image offset {_fmt_num(e.image_center_offset)} deg, "
            f"magnification {_fmt_num(e.angular_magnification)}" + (" (vignetted)" if e.vignetted else "")
        )
    for k, v in mm.to_dict().items():
        out.append(f"  {k}: {_fmt_num(v)}")
    return EXIT_OK, {"stimulus": stim.to_dict(), "mismatch": mm.to_dict()}


def _cmd_verify(bench, args, out):
    tol = _load_tolerances(args.tolerances)
    report = run_checklist(bench, args.ipd, tol)
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        line = f"step {c.step} {status}  {c.name}"
        if not c.passed:
            line += "  [" + ", ".join(c.failures + c.flags) + "]"
        if c.annotations:
            line += "  (" + "; ".join(c.annotations) + ")"
        out.append(line)
    out.append(f"overall: {'PASS' if report.passed else 'FAIL'} ({5 - len(report.failed_steps)}/5)")
    doc = report.to_dict()
    doc["tolerances"] = tol.to_dict()
    return (EXIT_OK if report.passed else EXIT_CHECK_FAILED), doc


def _cmd_solve(bench, args, out):
    try:
        adjust = AdjustableSet.around(bench, args.adjust)
    except (DofPathError, ValueError) as exc:
        raise UsageError(f"--adjust: {exc}") from None
    solved, record = solve_calibration(bench, adjust, user_ipd=args.ipd, max_iters=args.max_iters)
    out.append(f"{record.status}: {record.message} after {record.iterations} iterations")
    for p, v in record.values.items():
        out.append(f"  {p} = {v!r}")
    if record.null_dofs:
        out.append("  not constrained by any check: " + ", ".join(record.null_dofs))
    if args.out:
        try:
            save_bench(solved, args.out)
        except OSError as exc:
            raise OSError(f"cannot write {args.out}: {exc.strerror or exc}") from None
        out.append(f"wrote {args.out}")
    return (EXIT_OK if record.converged else EXIT_NOT_CONVERGED), {
        "record": record.to_dict(),
        "solved_fingerprint": bench_fingerprint(solved),
    }


def _cmd_tolerance(bench, args, out):
    try:
        spec = load_perturbation_spec(args.spec)
    except OSError as exc:
        raise UsageError(f"--spec: cannot read {args.spec}: {exc.strerror or exc}") from None
    try:
        stats = monte_carlo_tolerance(bench, spec, args.trials, args.seed, workers=args.workers)
    except EmptyStatsError as exc:
        out.append(f"no usable trials: {exc}")
        return EXIT_CHECK_FAILED, {"error": str(exc), "spec": spec.to_dict()}
    out.append(f"{stats.trials} trials (seed {stats.seed}; {stats.fold_failures} fold failures, {stats.rejected_draws} rejected draws)")
    for name, m in stats.metrics.items():
        out.append(
            f"  {name}: mean {_fmt_num(m.mean)}, std {_fmt_num(m.std)}, "
            f"p5 {_fmt_num(m.p5)}, p50 {_fmt_num(m.p50)}, p95 {_fmt_num(m.p95)}"
        )
    return EXIT_OK, {"stats": stats.to_dict(), "spec": spec.to_dict()}


def _cmd_render(bench, args, out):
    bench = _user_bench(bench, args)
    svg = render_svg(bench)
    try:
        Path(args.out).write_text(svg, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {args.out}: {exc.strerror or exc}") from None
    out.append(f"wrote {args.out}")
    warnings = [line for line in svg.splitlines() if 'class="warning"' in line]
    if warnings:
        out.append(f"  {len(warnings)} warning(s): light does not reach an eye")
    return EXIT_OK, {"svg_path": args.out, "svg_fingerprint": fingerprint(svg), "warnings": len(warnings)}


_COMMANDS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "solve": _cmd_solve,
    "tolerance": _cmd_tolerance,
    "render": _cmd_render,
}


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    """Run one command; return its exit code.  Never raises."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    out: list[str] = []
    fp = None
    try:
        text = _read(args.config, "config")
        fp = fingerprint(text)
        bench = parse_bench_config(text).to_bench()
        code, results = _COMMANDS[args.command](bench, args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        code, results = EXIT_USAGE, {"error": str(exc)}
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {args.config}: {d}", file=stderr)
        code, results = EXIT_USAGE, {"error": str(exc), "diagnostics": [d.__dict__ for d in exc.diagnostics]}
    except (BenchInvariantError, DofPathError) as exc:
        print(f"error: {args.config}: {exc}", file=stderr)
        code, results = EXIT_USAGE, {"error": str(exc)}
    except OSError as exc:
        print(f"error: {exc}", file=stderr)
        code, results = EXIT_INTERNAL, {"error": str(exc)}
    except Exception as exc:  # noqa: BLE001 - exit-code contract is total
        print(f"internal error: {type(exc).__name__}: {exc}", file=stderr)
        traceback.print_exc(file=stderr)
        code, results = EXIT_INTERNAL, {"error": f"{type(exc).__name__}: {exc}"}
    for line in out:
        print(line, file=stdout)
    if args.report:
        try:
            write_report(make_report(args.command, argv, fp, results, code), args.report)
        except (OSError, TypeError, ValueError) as exc:
            print(f"error: cannot write report {args.report}: {exc}", file=stderr)
            return EXIT_INTERNAL
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
