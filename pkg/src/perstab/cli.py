"""Command line entry point: ``perstab <command> --config <path> [--out <dir>] [--modes K] [--quiet]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .pipeline import COMMANDS, EXIT_CONFIG, dump_report, run, SCHEMA_VERSION
from .scenario import ConfigError, parse_scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perstab", description="Stability of time-periodic reaction-diffusion "
                                "solutions on periodically evolving surfaces of revolution.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="scenario file (TOML)")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: next to the config)")
    p.add_argument("--modes", type=int, default=None, help="highest Fourier mode K (overrides grid.K)")
    p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    out = args.out if args.out is not None else args.config.parent / f"{args.config.stem}_out"
    try:
        scenario = parse_scenario(args.config)
        if args.modes is not None and args.modes < 0:
            raise ConfigError("must be >= 0", "--modes")
    except ConfigError as exc:
        where = f" (line {exc.line}, column {exc.column})" if exc.line else ""
        print(f"perstab: config error: {exc}{where}", file=sys.stderr)
        if args.out is not None:
            dump_report({"schema_version": SCHEMA_VERSION, "command": args.command, "exit_code": EXIT_CONFIG,
                         "status": "config error", "error": {"type": "ConfigError", "message": str(exc),
                                                             "path": exc.path, "line": exc.line,
                                                             "column": exc.column}},
                        args.out / "report.json")
        return EXIT_CONFIG
    code, report = run(scenario, args.command, out, args.modes)
    if not args.quiet:
        verdict = report.get("verdict", {}).get("label")
        line = f"{args.command}: {report['status']} (exit {code})"
        if verdict:
            line += f", verdict {verdict}, lambda* = {report['verdict']['lambda_star']:.6g}"
        print(line)
        if report.get("error"):
            print(f"  {report['error']['type']}: {report['error']['message']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
