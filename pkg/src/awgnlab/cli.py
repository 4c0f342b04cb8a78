"""Command-line entry point: ``awgnlab <experiment> [flags]``."""

import argparse
import json
import logging
import sys

from . import __version__
from .lab import EXPERIMENTS, ConfigError, load_config, run, write_outputs

log = logging.getLogger("awgnlab")


def _int_list(text):
    return [int(v) for v in text.replace(",", " ").split()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="awgnlab",
        description="Sampled vs. continuous mutual information experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="flat YAML key-value file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--trials", type=int)
        p.add_argument("--fine-n", dest="fine_n", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--horizon", dest="T", type=float, help="time horizon T")
        p.add_argument("--n-list", dest="n_list", type=_int_list,
                       help="comma-separated grid sizes")
        p.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    overrides = {k: getattr(args, k) for k in
                 ("seed", "out_dir", "trials", "fine_n", "workers", "T", "n_list")}
    try:
        cfg = load_config(args.config, overrides, experiment=args.experiment)
    except (ConfigError, OSError) as exc:
        print(f"awgnlab: config error: {exc}", file=sys.stderr)
        return 2
    report = run(cfg)
    paths = write_outputs(report, cfg.out_dir)
    for name, check in report.checks.items():
        state = {True: "PASS", False: "FAIL", None: "SKIP"}[check["passed"]]
        log.info("%-24s %s  %s", name, state, check["detail"])
    log.info("wrote %s", json.dumps({k: str(v) for k, v in paths.items()}))
    log.info("wall clock %.2f s", report.wall_clock)
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
