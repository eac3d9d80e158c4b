"""Command-line front end.

Exit codes: 0 verdict pass (or expectations matched), 1 verdict fail (or an
expectation mismatch), 2 configuration error or missing config, 3 a check
raised at runtime (verdict ``error``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, scenarios
from .config import CHECKS, SCHEMA, ConfigError, ConfigNotFound, apply_overrides, load_config
from .runner import compare_expectations, export, run

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3
SEED_ENV = "HORIZON_II_SEED"


def _key_value(text: str) -> tuple[str, float]:
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.strip(), float(val)
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"value of {key!r} is not a number: {val!r}") from err


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="horizon-ii", description="Check I&I and horizontal-contraction conditions on scenarios.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the checks of a scenario or config file")
    r.add_argument("target", nargs="?", help="shipped scenario name or path to a JSON config")
    src = r.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="shipped scenario name")
    src.add_argument("--config", help="path to a JSON config")
    r.add_argument("--check", nargs="+", choices=CHECKS, metavar="NAME", help="checks to run (default: all in the config)")
    r.add_argument("--seed", type=_seed, help=f"sampling seed (fallback: ${SEED_ENV}, then the config)")
    r.add_argument("--out", type=Path, help="directory for report.json and CSV exports")
    r.add_argument("--export", choices=("traj", "decay", "none"), default="none")
    r.add_argument("--param", type=_key_value, action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--lambda", dest="lam", type=float, help="shorthand for --param lambda=VALUE")
    r.add_argument("--k", type=float, help="shorthand for --param k=VALUE")
    r.add_argument("--theta", type=float, help="shorthand for --param theta=VALUE")
    r.add_argument(
        "--expect-file",
        nargs="?",
        const="",
        metavar="PATH",
        help="compare outcomes with an expectation table (no PATH: the scenario's own expectations)",
    )
    r.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")

    sub.add_parser("list", help="list shipped scenarios")
    sub.add_parser("schema", help="print the config JSON schema")
    return ap


def _resolve(args) -> dict:
    name = args.scenario
    path = args.config
    if args.target:
        if name or path:
            raise ConfigError([("target", "give either a positional target or --scenario/--config")], "arguments")
        if args.target in scenarios.available():
            name = args.target
        else:
            path = args.target
    if name:
        return scenarios.load(name).config
    if path:
        return load_config(path)
    raise ConfigError([("target", "no scenario or config given")], "arguments")


def _expectations(arg: str, cfg: dict) -> dict:
    if arg == "":
        if "expectations" not in cfg:
            raise ConfigError([("$.expectations", "scenario has no expectation table")], cfg["name"])
        return cfg["expectations"]
    path = Path(arg)
    if not path.is_file():
        raise ConfigNotFound(f"expectation file not found: {path}")
    data = json.loads(path.read_text())
    return data.get("expectations", data) if "checks" not in data else data


def cmd_run(args) -> int:
    cfg = _resolve(args)
    params = dict(args.param)
    for key, val in (("lambda", args.lam), ("k", args.k), ("theta", args.theta)):
        if val is not None:
            params[key] = val
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV):
        seed = _seed(os.environ[SEED_ENV])
    cfg = apply_overrides(cfg, params, seed)
    expected = _expectations(args.expect_file, cfg) if args.expect_file is not None else None

    out = run(cfg, args.check)
    report = out.report
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(report.to_json() + "\n")
        export(out, args.out, args.export)
    elif args.export != "none":
        export(out, Path.cwd(), args.export)
    if not args.quiet:
        print(report.summary())

    if expected is not None:
        diffs = compare_expectations(report, expected)
        if not args.quiet:
            print("expectations: " + ("matched" if not diffs else "MISMATCH"))
            for d in diffs:
                print(f"  {d}")
        return EXIT_PASS if not diffs else EXIT_FAIL
    return {"pass": EXIT_PASS, "fail": EXIT_FAIL}.get(report.verdict, EXIT_ERROR)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(scenarios.available()))
        return EXIT_PASS
    if args.command == "schema":
        print(json.dumps(SCHEMA, indent=2))
        return EXIT_PASS
    try:
        return cmd_run(args)
    except ConfigNotFound as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as err:
        print("error: invalid configuration", file=sys.stderr)
        for path, msg in err.errors:
            print(f"  {err.source} {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err.filename or ''}: {err.strerror or err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
