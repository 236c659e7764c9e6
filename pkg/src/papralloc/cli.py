"""Command line entry point.

    papralloc run --config FILE [--strategy ccpa|ccpa_papr|ccpa_clip]
                  [--delta-db X] [--seed N] [--out DIR]

Exit status: 0 on success, 2 when any realization was infeasible, 1 on error.
"""
import argparse
import json
import logging
import sys

from .harness import STRATEGIES, ExperimentConfig, run_experiment, write_outputs

log = logging.getLogger("papralloc")


def build_parser():
    parser = argparse.ArgumentParser(prog="papralloc", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment and write report, EXIT chart and solver trace CSVs")
    run.add_argument("--config", required=True, help="flat key = value configuration file")
    run.add_argument("--strategy", choices=STRATEGIES)
    run.add_argument("--delta-db", type=float, help="single PAPR bound / clipping threshold in dB")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        overrides = {"strategy": args.strategy, "seed": args.seed, "out_dir": args.out}
        if args.delta_db is not None:
            overrides["delta_db"] = str(args.delta_db)
        config = ExperimentConfig.from_file(args.config, **overrides)
        report = run_experiment(config)
        out = write_outputs(config, report)
    except Exception as err:  # noqa: BLE001 - any failure maps to exit status 1
        print(f"error: {err}", file=sys.stderr)
        return 1
    agg = report.aggregates()
    print(json.dumps(agg, indent=2))
    log.info("outputs written to %s", out)
    return 2 if report.num_infeasible else 0


if __name__ == "__main__":
    sys.exit(main())
