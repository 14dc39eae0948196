"""Command-line front end.

Commands:
  verify  --scenario FILE [--out FILE] [--format json|csv] [--jobs N]
          [--bits] [--slack-tol X] [--timing]
  explain --scenario FILE --trial K [--bits]
  version

Exit codes: 0 success, 1 bound failure, 2 scenario parse error,
3 validation error.  Tolerance precedence: --slack-tol flag > scenario
file > SUPCHAN_SLACK_TOL environment variable > built-in default.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

from . import __version__
from . import campaigns as cp
from . import config
from .channels import FixedPointError
from .matkernel import ShapeError, ValidationError

EXIT_OK = 0
EXIT_BOUND_FAILURE = 1
EXIT_PARSE_ERROR = 2
EXIT_VALIDATION_ERROR = 3

LN2 = math.log(2.0)

# Detail keys holding entropy-like values (nats), eligible for bits display.
_ENTROPY_KEYS = (
    "lhs", "rhs", "slack", "chi", "mi_", "entropy_", "relent", "tr_",
    "slack_identity", "sampled_information",
)


def _resolve_tols(scenario: cp.Scenario, slack_tol_flag: float | None) -> config.Tolerances:
    tols = config.from_env(config.Tolerances())
    tols = scenario.tols(tols)
    if slack_tol_flag is not None:
        tols = tols.with_overrides(slack_tol=slack_tol_flag)
    return tols


def _load_scenario_file(path: str) -> cp.Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return cp.load_scenario(fh.read())


def _display(value, bits: bool):
    if bits and isinstance(value, float) and math.isfinite(value):
        return value / LN2
    return value


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        scenario = _load_scenario_file(args.scenario)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except cp.ScenarioParseError as exc:
        print(f"scenario parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except cp.ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION_ERROR

    tols = _resolve_tols(scenario, args.slack_tol)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    t0 = time.monotonic()
    try:
        report = cp.run_campaign(scenario, tols, jobs=jobs)
    except (ValidationError, ShapeError, cp.ScenarioError, FixedPointError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION_ERROR
    wall = time.monotonic() - t0
    if args.timing:
        report["summary"]["wall_time"] = wall

    text = cp.render_csv(report) if args.format == "csv" else cp.render_json(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)

    unit = "bits" if args.bits else "nats"
    summary = report["summary"]
    for family in sorted(report["sections"]):
        s = report["sections"][family]["summary"]
        lo = _display(s["min_slack"], args.bits)
        lo_txt = f"{lo:.3e}" if isinstance(lo, float) else "n/a"
        print(
            f"[{family}] trials={s['trials']} passes={s['passes']} "
            f"failures={s['failures']} flagged={s['flagged_infinite']} "
            f"min_slack={lo_txt} {unit}",
            file=sys.stderr,
        )
    print(
        f"total: {summary['passes']}/{summary['trials']} passed, "
        f"{summary['failures']} failed, {summary['flagged_infinite']} flagged "
        f"({wall:.2f} s)",
        file=sys.stderr,
    )
    if summary["failures"] > 0:
        failing = []
        for family in sorted(report["sections"]):
            for rep in report["sections"][family]["reports"]:
                if not rep["passed"] and "indeterminate" not in rep["flags"]:
                    failing.append((family, rep["metadata"].get("trial"), rep["slack"]))
        for family, trial, slack in failing[:20]:
            print(
                f"FAILURE {family} trial={trial} seed={scenario.seed} slack={slack}",
                file=sys.stderr,
            )
        return EXIT_BOUND_FAILURE
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    try:
        scenario = _load_scenario_file(args.scenario)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except cp.ScenarioParseError as exc:
        print(f"scenario parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except cp.ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION_ERROR
    if not 0 <= args.trial < scenario.trials:
        print(f"error: trial {args.trial} out of range [0, {scenario.trials})", file=sys.stderr)
        return EXIT_VALIDATION_ERROR

    tols = _resolve_tols(scenario, args.slack_tol)
    unit = "bits" if args.bits else "nats"
    try:
        for family in scenario.families():
            details: dict = {}
            report = cp.evaluate_trial(scenario, family, args.trial, tols, collect=details)
            print(f"== {family} | trial {args.trial} | seed {scenario.seed} ==")
            print(f"passed: {report.passed}   flags: {list(report.flags)}")
            for label, v in (("lhs", report.lhs), ("rhs", report.rhs), ("slack", report.slack)):
                print(f"{label} ({unit}): {cp.ext_to_json(_display(v, args.bits))!r}")
            print(f"tolerance: {report.tolerance!r}")
            for k in sorted(report.metadata):
                print(f"metadata.{k}: {cp.jsonable(report.metadata[k])!r}")
            for k in sorted(details):
                v = details[k]
                if args.bits and any(k.startswith(p) or k == p.rstrip("_") for p in _ENTROPY_KEYS):
                    if isinstance(v, float):
                        v = _display(v, True)
                    elif isinstance(v, (list, tuple)) and k == "sampled_information":
                        v = [_display(x, True) for x in v]
                print(f"{k}: {cp.jsonable(v)!r}")
            print()
    except (ValidationError, ShapeError, cp.ScenarioError, FixedPointError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION_ERROR
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supchan",
        description="Verify entropy-production bounds for correlated open quantum dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run a verification campaign from a scenario file")
    p_verify.add_argument("--scenario", required=True, help="path to the scenario JSON file")
    p_verify.add_argument("--out", default=None, help="write the report here instead of stdout")
    p_verify.add_argument("--format", choices=("json", "csv"), default="json")
    p_verify.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    p_verify.add_argument("--bits", action="store_true", help="display entropies in bits")
    p_verify.add_argument("--slack-tol", type=float, default=None, help="override the slack tolerance")
    p_verify.add_argument("--timing", action="store_true",
                          help="include wall_time in the report (breaks byte-reproducibility)")

    p_explain = sub.add_parser("explain", help="dump every intermediate quantity of one trial")
    p_explain.add_argument("--scenario", required=True)
    p_explain.add_argument("--trial", type=int, required=True)
    p_explain.add_argument("--bits", action="store_true")
    p_explain.add_argument("--slack-tol", type=float, default=None)

    sub.add_parser("version", help="print the package version")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    if args.command == "verify":
        return cmd_verify(args)
    if args.command == "explain":
        return cmd_explain(args)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
