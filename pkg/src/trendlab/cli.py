"""Command-line front end.

Subcommands map onto the library procedures:

    catest    classical linear-trend score test
    trend     metameter max-test for one link
    links     double max-test over links x metameters
    joint     regression + Williams contrasts, jointly calibrated
    overdisp  quasi-binomial metameter max-test for replicated tables

Reports go to stdout (or ``--output``) as text, JSON or CSV.  JSON is the
canonical machine format: fixed key order, floats at 17 significant digits,
infinite bounds as null; two runs with identical config and input produce
byte-identical output.  The text format rounds p-values to 5 decimals and
prints every other number at full precision.  Exit codes: 0 success, 2 on
parse/validation problems, 3 on numerical failure.

The seed defaults to 20240101; the TRENDLAB_SEED environment variable
overrides the default when ``--seed`` is absent.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import warnings

from . import __version__
from .data import parse_table
from .errors import TrendLabError
from .trendtest import (CaTestResult, TrendReport, ca_test, double_max_test,
                        joint_regression_williams_test, overdispersed_trend_test,
                        tukey_trend_test)

USAGE_EXIT = 2
NUMERICAL_EXIT = 3

_VALIDATION_ERRORS = (
    "TableParseError", "TableValidationError", "ScalingError",
    "DegreesOfFreedomError", "DegenerateTableError",
)


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isinf(x) or math.isnan(x):
            return "null"
        return format(x, ".17g")
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, str):
        return '"' + x.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if isinstance(x, dict):
        return "{" + ", ".join(f"{_fmt(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    raise TypeError(f"cannot serialize {type(x)}")


def _json_dumps(obj) -> str:
    return _fmt(obj)


def _config_dict(args, seed: int) -> dict:
    cfg = {
        "input": args.input,
        "alternative": getattr(args, "alternative", None),
        "seed": seed,
        "format": args.format,
    }
    for name in ("link", "scaling", "level", "pseudo_count", "mvn_tol",
                 "zero_dose_policy", "zero_dose_value", "continuity"):
        if hasattr(args, name):
            cfg[name.replace("_", "-")] = getattr(args, name)
    return cfg


def _component_dict(c) -> dict:
    return {
        "label": c.label,
        "effect_size": c.effect_size,
        "metameter": c.metameter,
        "estimate_link_scale": c.estimate_link_scale,
        "estimate_effect_scale": c.estimate_effect_scale,
        "std_error": c.std_error,
        "statistic": c.statistic,
        "raw_p": c.raw_p,
        "adjusted_p": c.adjusted_p,
        "sci_lower_link": c.sci_lower_link,
        "sci_upper_link": c.sci_upper_link,
        "sci_lower_effect": c.sci_lower_effect,
        "sci_upper_effect": c.sci_upper_effect,
        "dispersion": c.dispersion,
    }


def render_json(command: str, config: dict, result) -> str:
    if isinstance(result, CaTestResult):
        doc = {
            "command": command,
            "config": config,
            "statistic": result.statistic,
            "p_value": result.p_value,
            "alternative": result.alternative,
            "continuity": result.continuity,
        }
        return _json_dumps(doc) + "\n"
    r: TrendReport = result
    doc = {
        "command": command,
        "config": config,
        "procedure": r.procedure,
        "components": [_component_dict(c) for c in r.components],
        "best": r.best,
        "alternative": r.alternative,
        "level": r.level,
        "seed": r.seed,
        "N": r.N,
        "M": r.M,
        "critical_value": r.critical_value,
        "mvn_error": r.mvn_error,
        "influence_unit": r.influence_unit,
        "dispersion": r.dispersion,
        "warnings": list(r.warnings),
    }
    return _json_dumps(doc) + "\n"


def render_csv(command: str, result) -> str:
    if isinstance(result, CaTestResult):
        lines = ["statistic,p_value,alternative,continuity",
                 f"{result.statistic:.17g},{result.p_value:.17g},"
                 f"{result.alternative},{result.continuity}"]
        return "\n".join(lines) + "\n"
    cols = ("label", "effect_size", "metameter", "estimate_link_scale",
            "estimate_effect_scale", "std_error", "statistic", "raw_p", "adjusted_p",
            "sci_lower_link", "sci_upper_link", "sci_lower_effect", "sci_upper_effect",
            "dispersion")
    lines = [",".join(cols)]
    for c in result.components:
        row = []
        for name in cols:
            v = getattr(c, name)
            if v is None:
                row.append("")
            elif isinstance(v, float):
                row.append(format(v, ".17g"))
            else:
                row.append(str(v))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def render_text(command: str, result) -> str:
    if isinstance(result, CaTestResult):
        return (f"linear trend score test (alternative: {result.alternative}"
                f"{', continuity corrected' if result.continuity else ''})\n"
                f"  statistic: {result.statistic:.17g}\n"
                f"  p-value:   {result.p_value:.5f}\n")
    r: TrendReport = result
    out = [f"{r.procedure}  (alternative: {r.alternative}, level: {r.level:g}, seed: {r.seed})",
           f"rows: {r.N}   components: {r.M}   critical value: {r.critical_value:.17g}"]
    if r.dispersion is not None:
        out.append(f"dispersion (max over fits): {r.dispersion:.17g}")
    out.append("")
    header = f"{'component':<16} {'estimate':>22} {'effect':>22} {'statistic':>22} {'raw p':>9} {'adj p':>9}"
    out.append(header)
    for c in r.components:
        out.append(f"{c.label:<16} {c.estimate_link_scale:>22.17g} {c.estimate_effect_scale:>22.17g} "
                   f"{c.statistic:>22.17g} {c.raw_p:>9.5f} {c.adjusted_p:>9.5f}")
    out.append("")
    out.append("simultaneous confidence bounds (link scale / effect scale):")
    for c in r.components:
        lo = "-inf" if math.isinf(c.sci_lower_link) else format(c.sci_lower_link, ".17g")
        hi = "inf" if math.isinf(c.sci_upper_link) else format(c.sci_upper_link, ".17g")
        loe = "-inf" if math.isinf(c.sci_lower_effect) else format(c.sci_lower_effect, ".17g")
        hie = "inf" if math.isinf(c.sci_upper_effect) else format(c.sci_upper_effect, ".17g")
        out.append(f"{c.label:<16} [{lo}, {hi}]  /  [{loe}, {hie}]")
    out.append("")
    out.append(f"best component: {r.best}")
    for w in r.warnings:
        out.append(f"note: {w}")
    return "\n".join(out) + "\n"


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser, multi_link: bool):
    p.add_argument("--input", required=True, help="CSV file with header dose,events,trials[,unit]")
    p.add_argument("--alternative", choices=["greater", "less", "two-sided"], default="greater")
    p.add_argument("--format", choices=["text", "json", "csv"], default="text")
    p.add_argument("--output", default=None, help="write the report here instead of stdout")
    p.add_argument("--seed", type=int, default=None,
                   help="MVN integration seed (default 20240101 or $TRENDLAB_SEED)")
    if multi_link:
        p.add_argument("--link", default="logit,identity,log",
                       help="comma-separated links (logit,identity,log)")
    else:
        p.add_argument("--link", default="logit", choices=["logit", "identity", "log"])
    p.add_argument("--scaling", default="ari,ord,log", help="comma-separated dose metameters")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--pseudo-count", dest="pseudo_count", type=float, default=None,
                   help="pseudo events/failures per cell (default: automatic boundary policy)")
    p.add_argument("--mvn-tol", dest="mvn_tol", type=float, default=1e-5)
    p.add_argument("--zero-dose-policy", dest="zero_dose_policy",
                   choices=["extrapolate", "fixed"], default="extrapolate",
                   help="replacement policy for dose 0 under logarithmic scaling")
    p.add_argument("--zero-dose-value", dest="zero_dose_value", type=float, default=None,
                   help="replacement value when --zero-dose-policy=fixed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trendlab",
                                     description="multiplicity-adjusted trend tests for proportions")
    parser.add_argument("--version", action="version", version=f"trendlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catest", help="classical linear-trend score test")
    p.add_argument("--input", required=True)
    p.add_argument("--alternative", choices=["greater", "less", "two-sided"], default="greater")
    p.add_argument("--continuity", action="store_true", help="apply the continuity correction")
    p.add_argument("--format", choices=["text", "json", "csv"], default="text")
    p.add_argument("--output", default=None)
    p.add_argument("--seed", type=int, default=None)

    _add_common(sub.add_parser("trend", help="metameter max-test for one link"), multi_link=False)
    _add_common(sub.add_parser("links", help="double max-test over links and metameters"), multi_link=True)
    _add_common(sub.add_parser("joint", help="regression + Williams contrasts jointly"), multi_link=False)

    p = sub.add_parser("overdisp", help="quasi-binomial metameter max-test")
    _add_common(p, multi_link=False)
    return parser


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TRENDLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise TrendLabError(f"TRENDLAB_SEED={env!r} is not an integer") from None
    return 20240101


def _validate_common(args):
    if hasattr(args, "level") and not (0.5 < args.level < 1.0):
        raise TrendLabError(f"level must be in (0.5, 1); got {args.level}")
    if hasattr(args, "mvn_tol") and not (0.0 < args.mvn_tol <= 0.01):
        raise TrendLabError(f"mvn-tol must be in (0, 0.01]; got {args.mvn_tol}")
    if getattr(args, "zero_dose_policy", "extrapolate") == "fixed" and args.zero_dose_value is None:
        raise TrendLabError("--zero-dose-policy=fixed requires --zero-dose-value")


def run(argv: list[str]) -> int:
    """Parse arguments, run the requested procedure, write the report."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        _validate_common(args)
        seed = _resolve_seed(args)
        try:
            with open(args.input, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
            return USAGE_EXIT
        table = parse_table(text)

        zero_repl = None
        if getattr(args, "zero_dose_policy", "extrapolate") == "fixed":
            zero_repl = args.zero_dose_value

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # procedure notes land in report.warnings
            if args.command == "catest":
                result = ca_test(table, alternative=args.alternative,
                                 continuity=args.continuity)
            elif args.command == "trend":
                result = tukey_trend_test(
                    table, link=args.link, scalings=_split(args.scaling),
                    alternative=args.alternative, level=args.level,
                    pseudo_count=args.pseudo_count, seed=seed, mvn_tol=args.mvn_tol,
                    zero_dose_replacement=zero_repl)
            elif args.command == "links":
                result = double_max_test(
                    table, links=_split(args.link), scalings=_split(args.scaling),
                    alternative=args.alternative, level=args.level,
                    pseudo_count=args.pseudo_count, seed=seed, mvn_tol=args.mvn_tol,
                    zero_dose_replacement=zero_repl)
            elif args.command == "joint":
                result = joint_regression_williams_test(
                    table, link=args.link, scalings=_split(args.scaling),
                    alternative=args.alternative, level=args.level,
                    pseudo_count=args.pseudo_count, seed=seed, mvn_tol=args.mvn_tol,
                    zero_dose_replacement=zero_repl)
            elif args.command == "overdisp":
                result = overdispersed_trend_test(
                    table, scalings=_split(args.scaling), alternative=args.alternative,
                    level=args.level, seed=seed, link=args.link, mvn_tol=args.mvn_tol,
                    zero_dose_replacement=zero_repl)
            else:  # pragma: no cover
                print(f"error: unknown command {args.command}", file=sys.stderr)
                return USAGE_EXIT
    except TrendLabError as exc:
        kind = type(exc).__name__
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT if kind in _VALIDATION_ERRORS or isinstance(exc, ValueError) else NUMERICAL_EXIT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT

    config = _config_dict(args, seed)
    if args.format == "json":
        payload = render_json(args.command, config, result)
    elif args.format == "csv":
        payload = render_csv(args.command, result)
    else:
        payload = render_text(args.command, result)

    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
