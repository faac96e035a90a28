"""Seeded multi-trial runner comparing the three conformal methods."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conformal import METHODS, GeodesicConformalRegressor
from .difficulty import DEFAULT_EPS, ConfigurationError
from .igrf import build_geomag_dataset, load_coefficients, read_sites_file
from .metrics import (
    RECOMMENDATION_THRESHOLD,
    TrialReport,
    UndefinedCorrelationError,
    aggregate_trials,
    conditional_coverage_stats,
    equal_frequency_bins,
    pearson_correlation,
)
from .predict import geodesic_distance
from .vmf import SyntheticConfig, generate_synthetic_dataset, heteroscedasticity_ratios

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
EXPERIMENT_DEFAULTS = {
    "synthetic": {"trials": 300, "n": 1200},
    "igrf": {"trials": 100, "n": 3000},
}
FORMATS = ("csv", "json", "tsv-plot")


def splitmix64(x):
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(master_seed, trial):
    return (int(master_seed) & MASK64) ^ splitmix64(int(trial))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "synthetic"
    alpha: float = 0.10
    trials: int | None = None
    n: int | None = None
    split: tuple = (0.50, 0.25, 0.25)
    k: int = 20
    k_sigma: int = 20
    folds: int = 5
    bins: int = 6
    eps: float = DEFAULT_EPS
    seed: int = 0
    standardize: bool = True
    out: str | None = None
    coeff_file: str | None = None
    sites_file: str | None = None
    n_sites: int = 352
    mu_lat_scale: float = 1.0 / 3.0
    recommend_threshold: float = RECOMMENDATION_THRESHOLD
    jobs: int = 1
    formats: tuple = field(default=FORMATS)

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_DEFAULTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}")
        defaults = EXPERIMENT_DEFAULTS[self.experiment]
        if self.trials is None:
            object.__setattr__(self, "trials", defaults["trials"])
        if self.n is None:
            object.__setattr__(self, "n", defaults["n"])
        split = tuple(float(s) for s in self.split)
        object.__setattr__(self, "split", split)
        if len(split) != 3 or any(s <= 0 for s in split) or abs(sum(split) - 1.0) > 1e-9:
            raise ConfigurationError(f"split ratios must be three positive numbers summing to 1, got {split}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if self.trials < 1 or self.n < 1:
            raise ConfigurationError("trials and n must be >= 1")
        if min(self.k, self.k_sigma, self.folds, self.bins, self.jobs) < 1:
            raise ConfigurationError("k, k_sigma, folds, bins and jobs must be >= 1")
        bad = set(self.formats) - set(FORMATS)
        if bad:
            raise ConfigurationError(f"unknown output formats {sorted(bad)}")

    def split_sizes(self, n):
        n_train = int(round(self.split[0] * n))
        n_cal = int(round(self.split[1] * n))
        n_test = n - n_train - n_cal
        if min(n_train, n_cal, n_test) < 1:
            raise ConfigurationError(f"split {self.split} of {n} rows leaves an empty partition")
        if n_test < self.bins:
            raise ConfigurationError(f"{n_test} test rows cannot fill {self.bins} bins")
        return n_train, n_cal, n_test


class DataError(RuntimeError):
    pass


def load_igrf_dataset(cfg):
    try:
        table = load_coefficients(cfg.coeff_file)
        sites = read_sites_file(cfg.sites_file) if cfg.sites_file else None
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    return build_geomag_dataset(table, n_sites=cfg.n_sites, n_pairs=cfg.n, seed=cfg.seed, sites=sites)


def run_trial(cfg, trial, data=None):
    """One trial: draw or reshuffle data, fit once, calibrate all three methods."""
    seed = trial_seed(cfg.seed, trial)
    rng = np.random.default_rng(seed)
    if data is None:
        data = generate_synthetic_dataset(SyntheticConfig(n=cfg.n, lat_scale=cfg.mu_lat_scale), rng=rng)
    n_train, n_cal, _ = cfg.split_sizes(data.size)
    perm = rng.permutation(data.size)
    tr, cal, te = perm[:n_train], perm[n_train : n_train + n_cal], perm[n_train + n_cal :]
    X, Y = data.X, data.Y

    base = GeodesicConformalRegressor(
        method="adaptive",
        alpha=cfg.alpha,
        n_neighbors=cfg.k,
        k_sigma=cfg.k_sigma,
        n_folds=cfg.folds,
        eps=cfg.eps,
        manifold=data.manifold,
        standardize=cfg.standardize,
        random_state=rng,
    ).fit(X[tr], Y[tr])

    y_pred, degenerate = base.predictor_.predict_with_diagnostics(X[te])
    _, degenerate_cal = base.predictor_.predict_with_diagnostics(X[cal])
    n_degenerate = int(degenerate.sum() + degenerate_cal.sum())
    sigma = base.predict_sigma(X[te])
    residual = geodesic_distance(data.manifold, y_pred, Y[te])
    try:
        r = pearson_correlation(sigma, residual)
    except UndefinedCorrelationError:
        r = float("nan")
    bins = equal_frequency_bins(sigma, cfg.bins)

    reports = []
    for method in METHODS:
        model = base.with_method(method).calibrate(X[cal], Y[cal])
        hits = model.contains(X[te], Y[te], y_pred=y_pred, sigma=sigma)
        areas = model.region_areas(X[te], y_pred=y_pred, sigma=sigma)
        cov, cstd, worst = conditional_coverage_stats(bins, hits, cfg.bins)
        reports.append(
            TrialReport(
                method=method.value,
                trial=trial,
                seed=seed,
                marginal_coverage=float(hits.mean()),
                mean_area=float(areas.mean()),
                bin_coverages=tuple(float(c) for c in cov),
                cond_std=cstd,
                worst_bin=worst,
                diagnostic_r=r,
                degenerate_mean_count=n_degenerate,
                q_hat=float(model.q_hat_),
                n_test=int(te.size),
            )
        )
    return reports


def _run_trial_star(args):
    return run_trial(*args)


def sort_reports(reports):
    order = {m.value: i for i, m in enumerate(METHODS)}
    return sorted(reports, key=lambda r: (order.get(r.method, len(order)), r.trial))


def run_experiment(cfg, data=None):
    """All trials for ``cfg``; returns reports sorted by (method, trial)."""
    if cfg.experiment == "igrf" and data is None:
        data = load_igrf_dataset(cfg)
    tasks = [(cfg, t, data) for t in range(cfg.trials)]
    log.info("running %d %s trials on %d worker(s)", cfg.trials, cfg.experiment, cfg.jobs)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            chunks = list(pool.map(_run_trial_star, tasks, chunksize=max(1, len(tasks) // (4 * cfg.jobs))))
    else:
        chunks = [run_trial(*task) for task in tasks]
    return sort_reports([r for chunk in chunks for r in chunk])


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_trials_csv(reports, path):
    rows = [r.as_row() for r in reports]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def write_bins_tsv(reports, path):
    by_method = {}
    for r in reports:
        by_method.setdefault(r.method, []).append(r.bin_coverages)
    with open(path, "w") as fh:
        fh.write("method\tbin\tcoverage_mean\tcoverage_std\n")
        for method, covs in by_method.items():
            covs = np.asarray(covs)
            for b in range(covs.shape[1]):
                fh.write(f"{method}\t{b + 1}\t{float(covs[:, b].mean())!r}\t{float(covs[:, b].std())!r}\n")


def write_hist_tsv(reports, path):
    cols = ("marginal_coverage", "mean_area", "cond_std", "worst_bin")
    with open(path, "w") as fh:
        fh.write("trial\tmethod\t" + "\t".join(cols) + "\n")
        for r in reports:
            fh.write(f"{r.trial}\t{r.method}\t" + "\t".join(repr(float(getattr(r, c))) for c in cols) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def emit_report(reports, out_dir, formats=FORMATS, cfg=None):
    """Write ``trials.csv``, ``summary.json`` and ``bins.tsv``/``hist.tsv`` as requested.

    Returns the list of written paths.
    """
    if not reports:
        raise ValueError("no reports to emit")
    reports = sort_reports(reports)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        path = os.path.join(out_dir, "trials.csv")
        write_trials_csv(reports, path)
        written.append(path)
    if "json" in formats:
        threshold = cfg.recommend_threshold if cfg else RECOMMENDATION_THRESHOLD
        summary = aggregate_trials(reports, threshold)
        if cfg is not None:
            summary["config"] = {k: v for k, v in vars(cfg).items() if k not in ("out", "jobs")}
            if cfg.experiment == "synthetic":
                summary["heteroscedasticity"] = heteroscedasticity_ratios(SyntheticConfig(lat_scale=cfg.mu_lat_scale))
        path = os.path.join(out_dir, "summary.json")
        with open(path, "w") as fh:
            json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    if "tsv-plot" in formats:
        for name, writer in (("bins.tsv", write_bins_tsv), ("hist.tsv", write_hist_tsv)):
            path = os.path.join(out_dir, name)
            writer(reports, path)
            written.append(path)
    return written
