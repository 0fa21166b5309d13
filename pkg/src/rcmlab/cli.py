"""Command line entry point: ``rcm-lab run`` and ``rcm-lab list-experiments``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError, ParameterError, SizeError
from .experiments import REGISTRY, build_config, run_experiment
from .report import emit_report

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3


def parse_override(item: str) -> tuple[list[str], object]:
    """``section.key=value`` with ``value`` read as a TOML literal when possible."""
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"--set has an empty key in {item!r}")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return path, value


def load_config(path, overrides=(), seed=None, workers=None, out=None) -> dict:
    try:
        raw = tomllib.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    for item in overrides:
        keys, value = parse_override(item)
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{'.'.join(keys)}: {k} is not a section")
        node[keys[-1]] = value
    for k, v in (("seed", seed), ("workers", workers), ("out", out)):
        if v is not None:
            raw[k] = v
    return raw


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rcm-lab", description="Random conductance model experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config value, e.g. --set probe.t=2.5")
    sub.add_parser("list-experiments", help="print the experiment registry")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-experiments":
        for name, exp in REGISTRY.items():
            print(f"{name}\t{exp.description}")
        return EXIT_OK
    try:
        cfg = build_config(load_config(args.config, args.set, args.seed, args.workers, args.out))
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SizeError as exc:
        print(f"budget exceeded ({exc.budget_name}={exc.budget}): {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    files = emit_report(report, cfg.out)
    print(f"wrote {len(files)} files to {cfg.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
