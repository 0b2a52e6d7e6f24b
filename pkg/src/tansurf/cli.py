"""Command-line interface.

Subcommands:

* ``classify <problem>`` - classify the tangent surface at each requested t0
* ``scan <problem>``     - classify along a parameter grid and refine events
* ``mesh <problem>``     - build the surface mesh, export OBJ + CSV
* ``trial``              - Monte-Carlo type statistics of random curves
* ``verify``             - run the bundled validation suite

``<problem>`` is a path to a JSON problem file, or the name of a bundled one
(example-12-4, flat-normal-forms, sphere-latitude).  Exit codes: 0 success,
1 error, 2 at least one point came back unresolved.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness
from .expr import EvaluationError, ParseError
from .geodesic import GeodesicEscape, IntegrationError
from .harness import ProblemError


def _add_report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=None, help="tolerance override")
    p.add_argument(
        "--out", default=None, metavar="DIR",
        help="write the report into DIR (prints a summary instead of the body)",
    )
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tansurf",
        description="Tangent surfaces of curves under an affine connection: "
        "construction, meshing, and singularity classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify the requested curve points")
    p.add_argument("problem", help="problem file path or bundled name")
    _add_report_flags(p)
    p.add_argument(
        "--no-diagnostics", action="store_true",
        help="skip the sampling-based injectivity diagnostic",
    )

    p = sub.add_parser("scan", help="classify along a grid and refine events")
    p.add_argument("problem", help="problem file path or bundled name")
    _add_report_flags(p)

    p = sub.add_parser("mesh", help="build and export the surface mesh")
    p.add_argument("problem", help="problem file path or bundled name")
    p.add_argument("--out", default=".", metavar="DIR", help="output directory")

    p = sub.add_parser("trial", help="random-curve type statistics")
    p.add_argument("--m", type=int, default=3, help="ambient dimension")
    p.add_argument("--curves", type=int, default=1000)
    p.add_argument("--points", type=int, default=10, help="points per curve")
    p.add_argument("--n", type=int, default=200, help="directed sample count")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--degree", type=int, default=None, help="curve degree (>= m+1)")
    p.add_argument("--directed", action="store_true")
    p.add_argument("--ell", type=int, default=0, choices=(0, 1),
                   help="vanishing order of the factor c (directed trials)")
    p.add_argument("--flat", action="store_true",
                   help="use the flat connection instead of random ones")
    p.add_argument("--out", default=None, metavar="DIR")
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("verify", help="run the bundled validation suite")
    p.add_argument("--tol", type=float, default=harness.DEFAULT_TRIAL_TOL)

    return parser


def _emit(report: dict, code: int, args, stem: str) -> int:
    if args.format == "csv":
        text, ext = harness.report_to_csv(report), ".csv"
    else:
        text, ext = harness.serialize_report(report), ".json"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, stem + ext)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {path}")
        for line in _summary_lines(report):
            print(line)
    else:
        sys.stdout.write(text)
    return code


def _summary_lines(report: dict):
    records = report.get("records")
    if records is not None:
        counts: dict[str, int] = {}
        for r in records:
            counts[r["kind"]] = counts.get(r["kind"], 0) + 1
        yield f"{len(records)} records: " + ", ".join(
            f"{k} x{v}" for k, v in sorted(counts.items())
        )
        for r in records:
            if r.get("event"):
                yield f"event: {r['curve']} at t = {r['t0']:.9f} -> {r['kind']}"
    if "frequencies" in report:
        yield "type frequencies: " + ", ".join(
            f"({k}) x{v}" for k, v in report["frequencies"].items()
        )
        off = report.get("off_generic", [])
        yield f"off-generic samples: {len(off)}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ProblemError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ParseError, EvaluationError, IntegrationError, GeodesicEscape) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "classify":
        problem = harness.load_problem(args.problem)
        report, code = harness.run_classify(
            problem, tol=args.tol, run_diagnostics=not args.no_diagnostics
        )
        return _emit(report, code, args, f"{problem.name}-classify")
    if args.command == "scan":
        problem = harness.load_problem(args.problem)
        report, code = harness.run_scan(problem, tol=args.tol)
        return _emit(report, code, args, f"{problem.name}-scan")
    if args.command == "mesh":
        problem = harness.load_problem(args.problem)
        report, code = harness.run_mesh(problem, out_dir=args.out)
        path = os.path.join(args.out, f"{problem.name}-mesh.json")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(harness.serialize_report(report))
        print(f"wrote {path}")
        return code
    if args.command == "trial":
        conn = "flat" if args.flat else "random"
        if args.directed:
            report = harness.directed_genericity_trial(
                args.m, n=args.n, seed=args.seed, ell=args.ell, connection=conn
            )
        else:
            report = harness.genericity_trial(
                args.m,
                n_curves=args.curves,
                n_points=args.points,
                degree=args.degree,
                seed=args.seed,
                connection=conn,
            )
        args.format = args.format or "json"
        return _emit(report, 0, args, _trial_stem(args))
    if args.command == "verify":
        return harness.run_verify(tol=args.tol)
    raise AssertionError(f"unhandled command {args.command!r}")


def _trial_stem(args) -> str:
    kind = "directed-trial" if args.directed else "trial"
    return f"{kind}-m{args.m}-seed{args.seed}"


if __name__ == "__main__":
    sys.exit(main())
