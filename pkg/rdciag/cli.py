"""
Command line entry point.

    rdciag solve <config> [--out DIR]
    rdciag compare <config> --methods a,b,c [--out DIR]
    rdciag rate <trace...> [--burn-in F]
    rdciag check [--filter NAME]

Results are printed as key=value lines. Exit codes: 0 success, 1 failed
checks or unreadable files, 2 divergence, 3 invalid input.
"""

import argparse
import logging
import sys
import typing as t
from pathlib import Path

from .algorithms import METHODS, DivergenceError
from .checks import run_checks
from .config import ConfigError, load_config
from .harness import compare, compare_lines, rate_lines, run_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_DIVERGED = 2
EXIT_INVALID = 3

DEFAULT_OUT = Path("runs")


class UsageError(ValueError):
    """Raised in place of argparse's own exit on bad arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> t.NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def _methods(text: str) -> list[str]:
    names = [name.strip() for name in text.split(",") if name.strip()]
    unknown = [name for name in names if name not in METHODS]
    if not names or unknown:
        raise argparse.ArgumentTypeError(
            f"expected a comma list of {', '.join(METHODS)}, got {text!r}"
        )
    return names


def _burn_in(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"burn-in must lie in [0, 1), got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdciag", description="Dual incremental aggregated gradient solvers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress (INFO)")
    parser.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one configured experiment")
    solve.add_argument("config", type=Path)
    solve.add_argument("--out", type=Path, default=None, help="output directory")

    cmp = sub.add_parser("compare", help="run several methods on one problem")
    cmp.add_argument("config", type=Path)
    cmp.add_argument("--methods", type=_methods, required=True)
    cmp.add_argument("--out", type=Path, default=None, help="output directory")

    rate = sub.add_parser("rate", help="fit linear rates to stored traces")
    rate.add_argument("traces", type=Path, nargs="+")
    rate.add_argument("--burn-in", type=_burn_in, default=0.2)

    check = sub.add_parser("check", help="run the property suite")
    check.add_argument("--filter", default=None, help="run checks whose name contains this")
    return parser


def _out_dir(args: argparse.Namespace) -> Path:
    return args.out if args.out is not None else DEFAULT_OUT / args.config.stem


def _emit(lines: t.Iterable[str]) -> None:
    for line in lines:
        print(line)


def cmd_solve(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = _out_dir(args)
    result = run_experiment(config, out)
    _emit(result.report_lines)
    _emit(f"trace={s.path}" for s in result.seeds if s.path is not None)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    results = compare(config, args.methods, _out_dir(args))
    _emit(compare_lines(results))
    return EXIT_OK


def cmd_rate(args: argparse.Namespace) -> int:
    _emit(rate_lines(args.traces, args.burn_in))
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    results = run_checks(args.filter)
    for result in results:
        print(result)
    failed = sum(not r.passed for r in results)
    print(f"checks.passed={len(results) - failed}")
    print(f"checks.failed={failed}")
    return EXIT_OK if failed == 0 else EXIT_FAILED


COMMANDS: dict[str, t.Callable[[argparse.Namespace], int]] = {
    "solve": cmd_solve,
    "compare": cmd_compare,
    "rate": cmd_rate,
    "check": cmd_check,
}


def main(argv: t.Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    level = logging.INFO if args.verbose and not args.quiet else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"{args.config}: {issue}", file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as exc:
        logger.error("%s", exc)
        return EXIT_DIVERGED
    except ValueError as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_FAILED
