"""Command-line front end.

Subcommands: compute, dual, elbow, privacy, experiment, convert.  Values
print with 12 significant digits and LF line endings so snapshots are
byte-stable.  Exit codes: 2 for usage errors, 1 for solve or assertion
failures, 0 otherwise; ``--json-errors`` mirrors failures as a JSON object
on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .duality import dual_ascent, dual_from_flow, save_certificate
from .errors import (
    FileFormatError,
    InternalError,
    InvalidParameterError,
    NumericError,
    RobustOTError,
)
from .experiments import REGISTRY, run_experiment
from .measures import GroundMetric, load_measure, save_measure
from .privacy import (
    load_framework,
    mechanism_calibrate,
    mechanism_release,
    save_report,
)
from .radius import default_grid, elbow_detect, save_elbow_report
from .solvers import robust_wp, save_plan, tv_robust_wp

USAGE_ERROR = 2
FAILURE = 1


def _fmt(value):
    return f"{value:.12g}"


def _parse_p(text):
    if text.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError as exc:
        raise InvalidParameterError(f"cannot parse --p value {text!r}") from exc


def _load_custom_matrix(path):
    with open(path, "r", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return np.asarray([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise FileFormatError(f"{path}: non-numeric cost entry") from exc


def _resolve_eps(args):
    if args.eps is not None and (args.eps_mu is not None
                                 or args.eps_nu is not None):
        raise InvalidParameterError(
            "--eps and --eps-mu/--eps-nu are mutually exclusive"
        )
    if args.eps is not None:
        if getattr(args, "one_sided", False):
            return args.eps, 0.0
        return args.eps, args.eps
    if args.eps_mu is not None or args.eps_nu is not None:
        if getattr(args, "one_sided", False):
            raise InvalidParameterError(
                "--one-sided only combines with --eps"
            )
        return args.eps_mu or 0.0, args.eps_nu or 0.0
    return 0.0, 0.0


def _metric_for(args, mu, nu):
    p = _parse_p(args.p)
    if getattr(args, "cost_matrix", None):
        return GroundMetric(p=p, kind="custom",
                            matrix=_load_custom_matrix(args.cost_matrix))
    return GroundMetric(p=p)


def _add_measure_args(sub):
    sub.add_argument("mu", help="first measure file (.json or .csv)")
    sub.add_argument("nu", help="second measure file (.json or .csv)")
    sub.add_argument("--p", default="2", help="transport exponent or 'inf'")
    sub.add_argument("--eps", type=float, default=None,
                     help="symmetric robustness radius")
    sub.add_argument("--eps-mu", type=float, default=None)
    sub.add_argument("--eps-nu", type=float, default=None)
    sub.add_argument("--cost-matrix", default=None,
                     help="CSV file with a custom ground distance matrix")


def cmd_compute(args):
    mu = load_measure(args.mu)
    nu = load_measure(args.nu)
    metric = _metric_for(args, mu, nu)
    eps_mu, eps_nu = _resolve_eps(args)
    if args.tv_variant:
        if eps_mu != eps_nu:
            raise InvalidParameterError("the TV variant takes a single --eps")
        value = tv_robust_wp(mu, nu, metric, eps_mu)
        print(_fmt(value))
        return 0
    plan = robust_wp(mu, nu, metric, eps_mu, eps_nu)
    print(_fmt(plan.value))
    if args.plan_out:
        save_plan(plan, args.plan_out)
    return 0


def cmd_dual(args):
    mu = load_measure(args.mu)
    nu = load_measure(args.nu)
    metric = _metric_for(args, mu, nu)
    eps_mu, eps_nu = _resolve_eps(args)
    plan = robust_wp(mu, nu, metric, eps_mu, eps_nu)
    if args.method == "flow":
        cert = dual_from_flow(plan)
    else:
        cert = dual_ascent(mu.weights, nu.weights, plan.cost, eps_mu, eps_nu,
                           target_power=(1 - eps_mu) * (1 - eps_nu)
                           * plan.power_value)
    print(_fmt(cert.objective))
    if args.certificate_out:
        save_certificate(cert, args.certificate_out)
    return 0


def cmd_elbow(args):
    mu = load_measure(args.mu)
    nu = load_measure(args.nu)
    metric = _metric_for(args, mu, nu)
    grid = default_grid(args.grid_max, args.grid_steps)
    report = elbow_detect(mu, nu, metric, grid=grid,
                          slope_threshold=args.threshold)
    save_elbow_report(report, args.out)
    if args.figures:
        from .report import elbow_figure

        elbow_figure(report, f"{args.out}.png")
    print(_fmt(report.eps_hat))
    return 0


def cmd_privacy(args):
    framework = load_framework(args.framework)
    report = mechanism_calibrate(framework)
    if args.report_out:
        save_report(report, args.report_out)
    if args.release is not None:
        if args.seed is None:
            raise InvalidParameterError("--release requires --seed")
        print(_fmt(mechanism_release(args.release, report, args.seed)))
    else:
        print(json.dumps(report.to_json_dict(), indent=2))
    return 0


def cmd_experiment(args):
    seeds = []
    for part in args.seeds.split(","):
        part = part.strip()
        if part:
            try:
                seeds.append(int(part))
            except ValueError as exc:
                raise InvalidParameterError(
                    f"bad seed {part!r} in --seeds") from exc
    params = {}
    for item in args.param or []:
        if "=" not in item:
            raise InvalidParameterError(f"--param expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError:
            params[key] = val
    summary = run_experiment(args.name, seeds, args.out, params=params,
                             threads=args.threads, figures=args.figures)
    print(json.dumps(summary, indent=2))
    return 0 if summary["allPassed"] else FAILURE


def cmd_convert(args):
    save_measure(load_measure(args.input), args.output)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robustot",
        description="Outlier-robust Wasserstein distances",
    )
    parser.add_argument("--json-errors", action="store_true",
                        help="emit machine-readable errors on stderr")
    default_threads = int(os.environ.get("ROBUSTOT_THREADS", "1"))
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("compute", help="robust distance between two measures")
    _add_measure_args(sp)
    sp.add_argument("--one-sided", action="store_true",
                    help="trim only the first measure")
    sp.add_argument("--tv-variant", action="store_true",
                    help="use the TV-ball variant")
    sp.add_argument("--plan-out", default=None, help="write the plan JSON here")
    sp.set_defaults(func=cmd_compute)

    sp = sub.add_parser("dual", help="dual certificate for the robust distance")
    _add_measure_args(sp)
    sp.add_argument("--one-sided", action="store_true")
    sp.add_argument("--method", choices=("flow", "ascent"), default="flow")
    sp.add_argument("--certificate-out", default=None)
    sp.set_defaults(func=cmd_dual)

    sp = sub.add_parser("elbow", help="estimate the contamination level")
    _add_measure_args(sp)
    sp.add_argument("--grid-max", type=float, default=0.5)
    sp.add_argument("--grid-steps", type=int, default=26)
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--out", default="elbow",
                    help="prefix for the CSV/JSON/PNG report files")
    sp.add_argument("--no-figures", dest="figures", action="store_false")
    sp.set_defaults(func=cmd_elbow, figures=True)

    sp = sub.add_parser("privacy", help="calibrate the release mechanism")
    sp.add_argument("framework", help="framework JSON file")
    sp.add_argument("--report-out", default=None)
    sp.add_argument("--release", type=float, default=None,
                    help="true value to release with noise")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_privacy)

    sp = sub.add_parser("experiment", help="run a registered experiment")
    sp.add_argument("--name", required=True, choices=sorted(REGISTRY))
    sp.add_argument("--seeds", required=True,
                    help="comma-separated list of seeds")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--threads", type=int, default=default_threads)
    sp.add_argument("--param", action="append", default=[],
                    help="experiment parameter override key=value")
    sp.add_argument("--no-figures", dest="figures", action="store_false")
    sp.set_defaults(func=cmd_experiment, figures=True)

    sp = sub.add_parser("convert", help="convert a measure between CSV and JSON")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.set_defaults(func=cmd_convert)
    return parser


def _emit_error(exc, json_errors):
    if json_errors:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidParameterError, FileFormatError) as exc:
        _emit_error(exc, args.json_errors)
        return USAGE_ERROR
    except (NumericError, InternalError, RobustOTError) as exc:
        _emit_error(exc, args.json_errors)
        return FAILURE
    except OSError as exc:
        _emit_error(exc, args.json_errors)
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
