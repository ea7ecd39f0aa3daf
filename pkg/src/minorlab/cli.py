"""Command-line front end for :mod:`minorlab.harness`."""
from __future__ import annotations

import argparse
import json
import sys

from .harness import (ConfigError, ExperimentConfig, InvariantViolation,
                      run_experiment, resolve_workers, SCHEMA_VERSION)

SUBCOMMANDS = {
    "simulate": "trajectories",
    "tails": "tails",
    "decorrelate": "decorrelate",
    "flow": "coupled-flow",
    "lfl": "lfl-trace",
    "dyson": "dyson",
    "oracle-check": "oracle-check",
}


def _param(text):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def build_parser():
    ap = argparse.ArgumentParser(
        prog="minorlab",
        description="Monte Carlo experiments on the Wigner minor process.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=f"run a {kind} experiment")
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", help="master seed (unsigned 64-bit)")
        sp.add_argument("--workers", help="worker processes")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--format", default="csv", help="output format (csv)")
        sp.add_argument("--param", action="append", type=_param, default=[],
                        metavar="KEY=VALUE",
                        help="override a kind-specific parameter (JSON value)")
    return ap


def resolve_config(args) -> ExperimentConfig:
    kind = SUBCOMMANDS[args.command]
    if args.format != "csv":
        raise ConfigError("--format", f"only csv is supported, got {args.format!r}")
    if args.config:
        try:
            with open(args.config) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        if d.get("kind", kind) != kind:
            raise ConfigError("kind", f"config is {d.get('kind')!r} but "
                              f"subcommand {args.command!r} runs {kind!r}")
    else:
        d = {"schema_version": SCHEMA_VERSION}
    d = dict(d, kind=kind)
    if args.seed is not None:
        try:
            d["master_seed"] = int(args.seed)
        except ValueError:
            raise ConfigError("--seed", f"not an integer: {args.seed!r}") from None
    if args.out is not None:
        d["output_dir"] = args.out
    if args.param:
        d["params"] = dict(d.get("params", {}), **dict(args.param))
    d["workers"] = resolve_workers(args.workers, d.get("workers"))
    return ExperimentConfig.from_dict(d)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        manifest = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(manifest['outputs'])} files to {cfg.output_dir} "
          f"(digest {manifest['digest'][:12]})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
