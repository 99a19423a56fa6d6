"""Command line: ``lrbs <experiment> --config FILE [--out DIR] [--plots] [--threads N]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, format_echo, parse_config
from .experiments import ExperimentError, run_experiment, write_artifacts

log = logging.getLogger("lrbs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrbs", description="Locally regulated branching system experiments.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="configuration file")
    ap.add_argument("--out", default=None, help="output directory (default: out/<experiment>)")
    ap.add_argument("--plots", action="store_true", help="also write SVG figures")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for replicas")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as e:
        log.error("cannot read config: %s", e)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as e:
        log.error("config error: %s", e)
        return 2
    if cfg.declared is not None and cfg.declared != args.experiment:
        log.error("config is for %r, not %r", cfg.experiment, args.experiment)
        return 2
    cfg.experiment = args.experiment
    log.info(format_echo(cfg))
    try:
        res = run_experiment(cfg, threads=max(1, args.threads))
        out = args.out or f"out/{cfg.experiment}"
        files = write_artifacts(res, cfg, out, plots=args.plots)
    except (ExperimentError, ValueError) as e:
        log.error("experiment failed: %s", e)
        return 2
    except OSError as e:
        log.error("I/O error: %s", e)
        return 3
    for f in files:
        log.info("wrote %s", f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
