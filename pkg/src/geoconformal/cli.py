"""Command-line experiment runner.

Examples
--------
::

    geoconformal synthetic --trials 300 --out runs/synthetic
    geoconformal igrf --trials 100 --out runs/igrf --format csv --format json
"""
from __future__ import annotations

import argparse
import logging
import sys

from .difficulty import ConfigurationError
from .experiment import FORMATS, DataError, ExperimentConfig, emit_report, run_experiment
from .metrics import aggregate_trials

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _split(text):
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return parts


def build_parser():
    parser = _Parser(prog="geoconformal", description="Adaptive geodesic conformal prediction experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--alpha", type=float, default=0.10, help="target miscoverage (default 0.10)")
    common.add_argument("--trials", type=int, default=None, help="trials (default 300 synthetic, 100 igrf)")
    common.add_argument("--n", type=int, default=None, help="sample size (default 1200 synthetic, 3000 igrf)")
    common.add_argument("--split", type=_split, default=(0.5, 0.25, 0.25), help="train,cal,test ratios")
    common.add_argument("--k", type=int, default=20, help="base predictor neighbors")
    common.add_argument("--k-sigma", type=int, default=20, help="difficulty estimator neighbors")
    common.add_argument("--folds", type=int, default=5)
    common.add_argument("--bins", type=int, default=6)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument(
        "--format",
        dest="formats",
        action="append",
        choices=FORMATS,
        help="output format; repeat for several (default: all)",
    )
    common.add_argument("--no-standardize", action="store_true", help="use raw covariates for k-NN distances")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument(
        "--recommend-threshold",
        type=float,
        default=0.15,
        help="minimum difficulty correlation for recommending the adaptive method",
    )

    syn = sub.add_parser("synthetic", parents=[common], help="heteroscedastic vMF benchmark on S^2")
    syn.add_argument("--mu-lat-scale", type=float, default=1.0 / 3.0, help="latitude slope of the mean map")

    geo = sub.add_parser("igrf", parents=[common], help="IGRF geomagnetic direction forecasting")
    geo.add_argument("--coeff-file", default=None, help="IGRF coefficient file (default: bundled IGRF-14)")
    geo.add_argument("--sites-file", default=None, help="optional 'latitude longitude' site list")
    geo.add_argument("--n-sites", type=int, default=352)
    return parser


def config_from_args(args):
    extra = {}
    if args.experiment == "synthetic":
        extra["mu_lat_scale"] = args.mu_lat_scale
    else:
        extra.update(coeff_file=args.coeff_file, sites_file=args.sites_file, n_sites=args.n_sites)
    return ExperimentConfig(
        experiment=args.experiment,
        alpha=args.alpha,
        trials=args.trials,
        n=args.n,
        split=args.split,
        k=args.k,
        k_sigma=args.k_sigma,
        folds=args.folds,
        bins=args.bins,
        seed=args.seed,
        standardize=not args.no_standardize,
        out=args.out,
        recommend_threshold=args.recommend_threshold,
        jobs=args.jobs,
        formats=tuple(args.formats) if args.formats else FORMATS,
        **extra,
    )


def format_summary(summary):
    lines = [f"{'method':<10} {'marg.cov':>16} {'area':>9} {'cond.std':>9} {'worst':>7}"]
    for method, s in summary["methods"].items():
        cov = f"{s['marginal_coverage_mean']:.3f} +- {s['marginal_coverage_std']:.3f}"
        lines.append(f"{method:<10} {cov:>16} {s['mean_area']:>9.4f} {s['cond_std']:>9.3f} {s['worst_bin']:>7.3f}")
    r = summary["methods"].get("adaptive", {}).get("diagnostic_r")
    if r is not None:
        lines.append(f"difficulty diagnostic r = {r:.3f}; recommendation: {summary['recommendation']}")
    for col, res in summary["wilcoxon_adaptive_vs_standard"].items():
        if res.get("pvalue") is not None:
            lines.append(f"wilcoxon adaptive vs standard ({col}): p = {res['pvalue']:.3g}")
    return "\n".join(lines)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        reports = run_experiment(cfg)
        paths = emit_report(reports, cfg.out, cfg.formats, cfg)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_summary(aggregate_trials(reports, cfg.recommend_threshold)))
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
