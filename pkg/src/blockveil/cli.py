"""Command line entry point.

    blockveil <scenario> [--config FILE] [--desk] [--seed S]
              [--threads T] [--out DIR] [--set key=value ...]

Scenario presets provide full parameter sets; a config file (plain
``key = value`` lines) overrides the preset, and ``--set`` pairs override
both.  Results land in the output directory as results.csv,
manifest.json, and SVG charts.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (SCENARIOS, make_config, parse_config_text,
                          run_scenario, write_outputs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockveil",
                                     description=__doc__.split("\n")[0])
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", help="key = value config file overriding the preset")
    parser.add_argument("--desk", action="store_true",
                        help="use the scaled-down preset (minutes, one core)")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="trial-level worker processes")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config field (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides.update(parse_config_text(fh.read()))
    overrides.update(parse_config_text("\n".join(args.set)))
    overrides.pop("scenario", None)
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.out is not None:
        overrides["out_dir"] = args.out
    cfg = make_config(args.scenario, desk=args.desk, **overrides)
    table = run_scenario(cfg)
    out = write_outputs(cfg, table)
    print(f"{cfg.scenario}: {len(table.rows)} result rows -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
