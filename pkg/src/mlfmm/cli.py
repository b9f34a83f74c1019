"""``hjbench`` command line: single runs (JSON) and sweeps (CSV)."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; usage errors here exit with 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction(text: str) -> float:
    try:
        return bench.parse_value("h", text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="INI config with [run] and optional [sweep] sections")
    p.add_argument("--problem")
    p.add_argument("--dim", type=int)
    p.add_argument("--mode", choices=bench.RUN_MODES)
    p.add_argument("--h", type=_fraction, help="finest mesh step, e.g. 0.02 or 1/50")
    p.add_argument("--epsilon", type=_fraction)
    p.add_argument("--levels", type=int)
    p.add_argument("--eta-const", dest="eta_const", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--budget-secs", dest="budget_secs", type=float)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hjbench", description="Classic and multi-level fast marching benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_overrides(sub.add_parser("run", help="one run, JSON report"))
    sw = sub.add_parser("sweep", help="cartesian sweep from the config, CSV table")
    _add_overrides(sw)
    sw.add_argument("--jobs", type=int, default=1)
    return parser


_OVERRIDE_KEYS = ("problem", "dim", "mode", "h", "epsilon", "levels", "eta_const", "gamma", "beta",
                  "repetitions", "budget_secs", "out")


def _configs(args) -> list[bench.RunConfig]:
    try:
        base, grid = bench.load_config(args.config)
        if args.command == "run":
            grid = {}
        configs = bench.expand(base, grid)
        overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS}
        configs = [bench.with_overrides(c, **overrides) for c in configs]
        if args.command == "run":
            configs[0].validate()
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    return configs


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        configs = _configs(args)
    except UsageError as exc:
        print(f"hjbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "run":
        cfg = configs[0]
        try:
            report = bench.run(cfg)
        except Exception as exc:
            print(f"hjbench: run failed ({cfg.problem}, d={cfg.dim}, {cfg.mode}): {exc}", file=sys.stderr)
            return EXIT_FAILED
        _emit(json.dumps(report.to_dict(), indent=2) + "\n", cfg.out)
        return EXIT_OK

    if args.jobs < 1:
        print("hjbench: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    rows = bench.sweep(configs, jobs=args.jobs)
    _emit(bench.rows_to_csv(rows), configs[0].out)
    if all(r["status"] == "error" for r in rows):
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
