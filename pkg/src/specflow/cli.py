"""Command line entry point: ``specflow run | plot | cf``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .cache import CodeCache
from .config import ExperimentConfig
from .errors import SpecflowError
from .experiments import run_experiment, write_outputs
from .rotation import classify_diophantine, parse_alpha

EXIT_OK, EXIT_ERROR, EXIT_ASSERT = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specflow", description="Special flows over rotations: experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")

    plot = sub.add_parser("plot", help="SVG plots from summary.json files")
    plot.add_argument("summaries", nargs="+")
    plot.add_argument("-o", "--out", default=None)

    cf = sub.add_parser("cf", help="continued fraction and Diophantine report")
    cf.add_argument("alpha")
    cf.add_argument("--depth", type=int, default=48)
    cf.add_argument("--c-const", type=float, default=1.0)
    return ap


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    for item in args.override:
        cfg.override(item)
    cache = CodeCache(cfg.cache_dir())
    res = run_experiment(cfg, cache)
    paths = write_outputs(cfg, res, cfg.get("output", "dir"), cache)
    for c in res.checks:
        tag = "PASS" if c.passed else ("FAIL" if c.asserted else "WARN")
        print(f"{tag} {c.name} {c.detail}".rstrip())
    print(f"wrote {paths['summary']}")
    if cfg.getbool("experiment", "assert") and res.failed_assertions:
        return EXIT_ASSERT
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plot import plot_summaries

    out = plot_summaries(args.summaries, args.out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_cf(args) -> int:
    rot = parse_alpha(args.alpha, args.depth)
    rep = classify_diophantine(rot, args.c_const)
    doc = {"partial_quotients": list(rot.partial_quotients), "q": [str(q) for q in rot.q],
           "report": rep.to_json()}
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"run": cmd_run, "plot": cmd_plot, "cf": cmd_cf}[args.cmd]
    try:
        return handler(args)
    except (SpecflowError, ValueError, OSError) as exc:
        print(f"specflow: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
