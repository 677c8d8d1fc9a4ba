"""Command-line runner: ``flowlab run`` and ``flowlab list-suites``."""

from __future__ import annotations

import argparse
import json
import sys

from .suites import SUITES, RunConfig, run_suite

CONFIG_KEYS = {"suite": str, "seed": int, "replicas": int, "paths": int, "out": str, "fleet_size": int}
SCHEMA_HINT = 'config JSON: {"suite": <name>, "seed": <u64>, "replicas": <int>, "paths": <int>, "fleet_size": <int>, "out": <path>}'


class UsageError(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowlab", description="Run numerical certification suites.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a suite and emit a JSON report")
    run.add_argument("--suite")
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--replicas", type=int)
    run.add_argument("--paths", type=int)
    run.add_argument("--fleet-size", dest="fleet_size", type=int)
    run.add_argument("--config", help="JSON file whose entries override the flags")
    sub.add_parser("list-suites", help="print the shipped suite names")
    return p


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k, None) is not None}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(loaded) - set(CONFIG_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        for k, v in loaded.items():
            try:
                values[k] = CONFIG_KEYS[k](v)
            except (TypeError, ValueError) as e:
                raise UsageError(f"bad value for {k}: {v!r}") from e
    if "suite" not in values:
        raise UsageError("a suite is required (--suite or config)")
    if values["suite"] not in SUITES:
        raise UsageError(f"unknown suite {values['suite']!r}; known: {', '.join(SUITES)}")
    cfg = RunConfig(**values)
    try:
        cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-suites":
        print("\n".join(SUITES))
        return 0
    try:
        cfg = build_config(args)
    except UsageError as e:
        print(f"flowlab: error: {e}\n{SCHEMA_HINT}", file=sys.stderr)
        return 2
    report = run_suite(cfg)
    text = json.dumps(report, sort_keys=True, indent=2)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    for c in report["checks"]:
        print(f"[{'PASS' if c['verdict'] else 'FAIL'}] {c['check']}: residual={c['residual']} tol={c['tolerance']}", file=sys.stderr)
    return 0 if report["verdict"] else 1


if __name__ == "__main__":
    sys.exit(main())
