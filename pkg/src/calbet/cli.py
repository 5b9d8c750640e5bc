"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 data-quality
failure, 4 internal invariant violation.
"""

import argparse
import logging
import sys
import warnings

from . import pipeline
from .errors import CalbetWarning, ConfigError, DataError, InvariantViolation
from .synthetic import make_league

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {category.__name__}: {message}", file=sys.stderr)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="calbet",
        description="Calibration- vs accuracy-driven model selection and betting backtests.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True, help="pipeline JSON config")
        p.add_argument("--out", help="override the output directory")
        return p

    with_config(sub.add_parser("ingest", help="validate and join games with odds"))
    with_config(sub.add_parser("features", help="build features and run the shift screen"))
    with_config(sub.add_parser("select", help="run both selection branches"))
    p = with_config(sub.add_parser("backtest", help="simulate betting with selected models"))
    p.add_argument("--rule", action="append",
                   help="stake rule: fixed, kelly8, fixed:<amount> or kelly:<n> (repeatable)")
    p.add_argument("--bankroll", type=float, help="initial bankroll")
    p.add_argument("--selection", action="append",
                   help="selection JSON to backtest (repeatable; default: every branch)")
    with_config(sub.add_parser("report", help="compare branches across backtests"))
    p = with_config(sub.add_parser("run", help="all stages in order"))
    p.add_argument("--rule", action="append")
    p.add_argument("--bankroll", type=float)
    p = sub.add_parser("demo-data", help="write the synthetic mini-league and its config")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=2019)
    return parser


def _dispatch(args):
    if args.command == "demo-data":
        path = make_league(args.out_dir, seed=args.seed)
        print(path)
        return EXIT_OK

    cfg = pipeline.load_config(args.config, out=args.out,
                               bankroll=getattr(args, "bankroll", None),
                               rules=getattr(args, "rule", None))
    if args.command == "ingest":
        matched, report = pipeline.run_ingest(cfg)
        print(f"matched {report.matched} games; {len(report.unmatched_games)} without odds, "
              f"{len(report.orphan_lines)} orphan lines")
    elif args.command == "features":
        fd, results = pipeline.run_features(cfg)
        dropped = [r.feature for r in results if r.decision == "drop"]
        print(f"{len(fd.kept)} features kept, {len(dropped)} dropped for covariate shift")
        if not fd.kept:
            return EXIT_DATA
    elif args.command == "select":
        for branch, o in pipeline.run_select(cfg).items():
            print(f"{branch}: {o.learner} on {len(o.features)} features, test score {o.test_score:.4f}")
    elif args.command in ("backtest", "run"):
        if args.command == "run":
            pipeline.run_ingest(cfg)
            fd, _ = pipeline.run_features(cfg)
            if not fd.kept:
                return EXIT_DATA
            pipeline.run_select(cfg)
        reports = pipeline.run_backtest(cfg, selections=getattr(args, "selection", None))
        for tag, rep in reports.items():
            print(f"{tag}: final {rep.final_bankroll:.2f}, ROI {rep.roi:.2f}%, "
                  f"bet {rep.games_bet}/{rep.games_forecast} games")
        if args.command == "run":
            pipeline.run_report(cfg)
    elif args.command == "report":
        for row in pipeline.run_report(cfg):
            print(f"{row['branch']}: max ROI {row['max_roi']}%, average ROI {row['average_roi']}%")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    with warnings.catch_warnings():
        warnings.simplefilter("always", CalbetWarning)
        warnings.showwarning = _show_warning
        try:
            return _dispatch(args)
        except ConfigError as exc:
            parser.print_usage(sys.stderr)
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except InvariantViolation as exc:
            print(f"internal error: {exc}", file=sys.stderr)
            return EXIT_INTERNAL
        except DataError as exc:
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
