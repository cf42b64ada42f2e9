"""Command-line entry point: ``emdiff <experiment> --seed N [options]``."""
from __future__ import annotations

import argparse
import sys

from .config import ExperimentConfig, parse_config_text
from .errors import EmdiffError
from .experiments import run, run_all

SUBCOMMANDS = ("converge", "memorize", "partial-recover", "trajectory-compare",
               "mi-bound", "gaussian-example")

# flag -> config key
_FLAGS = {
    "T": "T",
    "beta_start": "beta_start",
    "beta_end": "beta_end",
    "steps": "steps",
    "n": "n",
    "count": "count",
    "target": "target",
    "d": "d",
    "dataset": "dataset",
}


def _add_common(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--seed", type=int, required=seed_required, help="master seed (mandatory)")
    p.add_argument("--out", help="directory for CSV/SVG reports")
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--T", type=int, help="number of forward steps")
    p.add_argument("--beta-start", type=float)
    p.add_argument("--beta-end", type=float)
    p.add_argument("--steps", type=int, help="reverse steps K (sub-sequence of T)")
    p.add_argument("--n", type=int, help="training set size")
    p.add_argument("--count", type=int, help="number of generated samples / sources")
    p.add_argument("--target", help="isotropic-gaussian | gaussian-mixture | ring | point-cloud")
    p.add_argument("--d", type=int, help="dimension of synthetic targets")
    p.add_argument("--dataset", help="CSV dataset path (overrides the synthetic target)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emdiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        _add_common(sub.add_parser(name, help=f"run the {name} experiment"))
    ra = sub.add_parser("run-all", help="run every *.cfg in a directory")
    ra.add_argument("config_dir")
    ra.add_argument("--out", help="root directory; each config writes to OUT/<config name>")
    ra.add_argument("--seed", type=int, help="override every config's seed")
    return parser


def config_from_args(args) -> ExperimentConfig:
    mapping = {}
    if args.config:
        with open(args.config) as fh:
            mapping.update(parse_config_text(fh.read()))
    mapping["experiment"] = args.command
    for flag, key in _FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            mapping[key] = str(val)
    for item in args.set:
        if "=" not in item:
            raise EmdiffError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        mapping[k.strip()] = v.strip()
    mapping["seed"] = str(args.seed)
    if args.out:
        mapping["out"] = args.out
    return ExperimentConfig.from_mapping(mapping)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run-all":
            return run_all(args.config_dir, args.out, args.seed)
        cfg = config_from_args(args)
        rep = run(cfg)
    except EmdiffError as exc:
        print(f"emdiff: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    width = max((len(k) for k in rep.scalars), default=0)
    for k in sorted(rep.scalars):
        print(f"{k:<{width}}  {rep.scalars[k]}")
    for v in rep.violations:
        print(f"contract violated: {v}", file=sys.stderr)
    return 1 if rep.violations else 0


if __name__ == "__main__":
    sys.exit(main())
