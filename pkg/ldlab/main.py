"""
Command-line application.

    python -m ldlab <command> [options]

Configuration precedence: flags > --config JSON document > built-in defaults.
Exit codes: 0 certified, 1 violation or not certified, 2 usage error, 3 numeric failure.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from ldlab.commands.analysis import COMMANDS
from ldlab.commands.plots import cmd_plot
from ldlab.error_handlers import (
    ExitCodes,
    LabError,
    create_error_report,
    create_lab_error_report,
    create_success_report,
    handle_pydantic_validation_error,
)
from ldlab.models import DEFAULT_N_LADDER, RunConfig, to_jsonable
from ldlab.services.metrics import metrics_collector
from ldlab.services.storage import ResultStore, read_json
from ldlab.validation import ValidationResult, validate_config

# App configuration
APP_NAME = "ldlab"
VERSION = "1.0.0"

logger = logging.getLogger(__name__)

# Spec-valued options whose values may start with "-" (e.g. a grid from -3)
SPEC_OPTIONS = ("--grid", "--family", "--model", "--f")


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _add_run_options(parser: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    parser.add_argument("--config", default=None, help="JSON configuration document")
    parser.add_argument("--model", default=S, help="laplace | gaussian | gaussian(m) | robust:<ids> | lattice:<csv>")
    parser.add_argument("--grid", default=S, help="'lower,upper,points' per axis, axes separated by ';'")
    parser.add_argument("--family", default=S, help="linear:min,max,step | invv:min,max,step | custom:<csv>")
    parser.add_argument("--f", dest="functions", action="append", default=S,
                        help="const:c | linear:y | invv:a | file:<csv> (repeatable)")
    parser.add_argument("--n-ladder", dest="n_ladder", type=_ints, default=S,
                        help=f"comma-separated increasing n values (default {','.join(map(str, DEFAULT_N_LADDER))})")
    parser.add_argument("--tail-window", dest="tail_window", type=int, default=S)
    parser.add_argument("--tolerance", type=float, default=S)
    parser.add_argument("--exact-tolerance", dest="exact_tolerance", type=float, default=S)
    parser.add_argument("--rate-tolerance", dest="rate_tolerance", type=float, default=S)
    parser.add_argument("--margin", type=float, default=S)
    parser.add_argument("--radius", type=float, default=S)
    parser.add_argument("--entropy-source", dest="entropy_source", choices=("auto", "analytic", "numeric"), default=S)
    parser.add_argument("--seed", type=int, default=S)
    parser.add_argument("--tightness-levels", dest="tightness_levels", type=_floats, default=S)
    parser.add_argument("--ball-radii", dest="ball_radii", type=_floats, default=S)
    parser.add_argument("--check-finite-dimension", dest="check_finite_dimension", action="store_true", default=S)
    parser.add_argument("--out", default=S, help="output directory (default: results)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_NAME, description="Maxitive risk measures and large deviations laboratory")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {VERSION}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug with tracebacks")
    parser.add_argument("--metrics", action="store_true", help="print timing statistics to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    helps = {
        "entropy": "entropy sweeps and asymptotic entropies",
        "rate": "conjugate rate over a testing family",
        "exposed": "exposed points of the conjugate rate",
        "verify": "full LDP / LP verification pipeline",
        "represent": "entropy against the convex integral",
    }
    for name, text in helps.items():
        _add_run_options(sub.add_parser(name, help=text))

    plot = sub.add_parser("plot", help="SVG overlay of up to three 1-d curves")
    plot.add_argument("inputs", nargs="+", help="rate or grid-function CSV files")
    plot.add_argument("-o", "--out", required=True, help="SVG output path")
    plot.add_argument("--labels", type=lambda s: s.split(","), default=None)
    plot.add_argument("--title", default="")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge built-in defaults, the --config document and explicit flags"""
    data: Dict[str, Any] = {}
    if args.config:
        document = read_json(args.config)
        if not isinstance(document, dict):
            raise LabError(f"'{args.config}' must hold a JSON object", ExitCodes.USAGE, "usage_error")
        data.update(document)
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "command", "verbose", "metrics")}
    data.update(flags)
    result: ValidationResult = validate_config(data)
    result.raise_if_invalid("Invalid configuration")
    return RunConfig(**data)


def _configure_logging(verbosity: int):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def _emit(document: Dict[str, Any], stream):
    print(json.dumps(to_jsonable(document), sort_keys=True, indent=2), file=stream)


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "plot":
        code, summary = cmd_plot(args.inputs, args.out, args.labels, args.title)
    else:
        config = resolve_config(args)
        store = ResultStore(config.out)
        code, summary = COMMANDS[args.command](config, store)
    message = "Certified" if code == ExitCodes.CERTIFIED else "Not certified"
    _emit(create_success_report(summary, message=f"{args.command}: {message}"), sys.stdout)
    return code


def join_spec_values(argv: List[str]) -> List[str]:
    """Rewrite '--grid -3,3,61' as '--grid=-3,3,61' so argparse does not read the value as a flag"""
    joined: List[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token in SPEC_OPTIONS and i + 1 < len(argv) and argv[i + 1].startswith("-") and argv[i + 1] != "--":
            joined.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        joined.append(token)
        i += 1
    return joined


def run(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(join_spec_values(sys.argv[1:] if argv is None else argv))
    except SystemExit as e:
        return ExitCodes.USAGE if e.code else ExitCodes.CERTIFIED
    _configure_logging(args.verbose)

    try:
        return _dispatch(args)
    except LabError as e:
        _emit(create_lab_error_report(e), sys.stderr)
        if args.verbose > 1:
            logger.exception("Command failed")
        return e.exit_code
    except ValidationError as e:
        _emit(handle_pydantic_validation_error(e), sys.stderr)
        return ExitCodes.USAGE
    except (FloatingPointError, ArithmeticError, ValueError) as e:
        _emit(create_error_report(f"Numeric failure: {e}", ExitCodes.NUMERIC, "numeric_failure"), sys.stderr)
        if args.verbose > 1:
            logger.exception("Numeric failure")
        return ExitCodes.NUMERIC
    except OSError as e:
        _emit(create_error_report(f"Cannot access file: {e}", ExitCodes.USAGE, "file_error"), sys.stderr)
        return ExitCodes.USAGE
    finally:
        if args.metrics:
            _emit(metrics_collector.get_statistics(), sys.stderr)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
