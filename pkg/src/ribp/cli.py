"""Command line: ``ribp <command> [--config PATH] [--seed N] [--out DIR] [--chains N]``.

Settings are layered: per-command defaults, then the config file, then
``--set key=value`` pairs, then the dedicated flags.  The exit status is 0
when every check the command runs passes, 1 when one fails and 2 on bad
input.
"""
import argparse
import sys

from ribp.config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, parse_config_text
from ribp.csvio import ParseError
from ribp.experiments import run


def build_parser():
    parser = argparse.ArgumentParser(prog="ribp", description="Restricted Indian buffet process experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--chains", type=int, help="independent chains, run in parallel")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
    return parser


def resolve_config(args):
    config = ExperimentConfig.defaults(args.command)
    if args.config:
        config = load_config(args.config, base=config)
    if args.set:
        config = parse_config_text("\n".join(args.set), base=config, source="--set")
    flags = {k: getattr(args, k) for k in ("seed", "out", "chains") if getattr(args, k) is not None}
    config = config.with_overrides(experiment=args.command, **flags)
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        checks = run(config)
    except (ConfigError, ParseError, OSError) as err:
        print(f"ribp {args.command}: {err}", file=sys.stderr)
        return 2
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value_a!r} vs {c.value_b!r} ({c.detail})")
    print(f"outputs in {config.out}")
    return 0 if all(c.passed for c in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
