"""Coverage, efficiency and conditional-uniformity metrics, plus the paired test."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import norm, rankdata

N_BINS = 6
RECOMMENDATION_THRESHOLD = 0.15


class UndefinedCorrelationError(ValueError):
    pass


def marginal_coverage(hits):
    hits = np.asarray(hits, dtype=bool).reshape(-1)
    if hits.size == 0:
        raise ValueError("marginal_coverage of an empty sequence")
    return float(hits.mean())


def equal_frequency_bins(values, n_bins=N_BINS):
    """Bin labels ``0..n_bins-1`` by rank of ``values``.

    Rows are ordered by (value, original index). Every bin gets ``n // n_bins``
    rows and the last ``n % n_bins`` bins get one extra. Tied values may
    straddle a bin boundary.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    n = values.size
    if n < n_bins:
        raise ValueError(f"cannot form {n_bins} bins from {n} values")
    order = np.argsort(values, kind="stable")
    base, rem = divmod(n, n_bins)
    sizes = np.full(n_bins, base)
    if rem:
        sizes[n_bins - rem :] += 1
    labels = np.empty(n, dtype=np.intp)
    labels[order] = np.repeat(np.arange(n_bins), sizes)
    return labels


def conditional_coverage_stats(bins, hits, n_bins=N_BINS):
    """Per-bin coverage, their population standard deviation, and the minimum."""
    bins = np.asarray(bins, dtype=np.intp).reshape(-1)
    hits = np.asarray(hits, dtype=float).reshape(-1)
    if bins.shape != hits.shape:
        raise ValueError("bins and hits must be aligned")
    counts = np.bincount(bins, minlength=n_bins)
    if counts.size > n_bins or np.any(counts == 0):
        raise ValueError("every bin must be nonempty and labels must be < n_bins")
    cov = np.bincount(bins, weights=hits, minlength=n_bins) / counts
    return cov, float(np.std(cov)), float(cov.min())


def pearson_correlation(a, b):
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size != b.size or a.size < 2:
        raise ValueError("need two equal-length sequences of length >= 2")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(np.dot(da, da)), np.sqrt(np.dot(db, db))
    if sa == 0.0 or sb == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant input")
    return float(np.clip(np.dot(da, db) / (sa * sb), -1.0, 1.0))


class WilcoxonResult(NamedTuple):
    statistic: float
    pvalue: float
    method: str
    n: int


def wilcoxon_signed_rank(diffs, exact_max_n=12):
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zeros are dropped. The statistic is ``min(W+, W-)`` with average ranks
    for ties. For ``n <= exact_max_n`` the null distribution is enumerated
    over all sign patterns of the observed ranks; otherwise the normal
    approximation with tie and continuity corrections is used.
    """
    d = np.asarray(diffs, dtype=float).reshape(-1)
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, "degenerate", 0)
    if n < 5:
        raise ValueError(f"need at least 5 nonzero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= exact_max_n:
        totals = np.array([sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product((0, 1), repeat=n)])
        p = 2.0 * np.count_nonzero(totals <= w + 1e-9) / totals.size
        return WilcoxonResult(w, float(min(1.0, p)), "exact", n)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = (abs(w - mean) - 0.5) / math.sqrt(var)
    p = 2.0 * norm.sf(max(z, 0.0))
    return WilcoxonResult(w, float(min(1.0, p)), "normal", n)


@dataclass
class TrialReport:
    """Metrics for one method on one seeded trial."""

    method: str
    trial: int
    seed: int
    marginal_coverage: float
    mean_area: float
    bin_coverages: tuple = field(default_factory=tuple)
    cond_std: float = 0.0
    worst_bin: float = 0.0
    diagnostic_r: float = float("nan")
    degenerate_mean_count: int = 0
    q_hat: float = float("nan")
    n_test: int = 0

    def as_row(self):
        row = asdict(self)
        bins = row.pop("bin_coverages")
        for i, c in enumerate(bins, start=1):
            row[f"bin_{i}"] = c
        return row


def _sd(values):
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


def recommend_method(mean_r, threshold=RECOMMENDATION_THRESHOLD):
    """Deployment rule: use the adaptive score when the difficulty diagnostic is informative."""
    if mean_r is None or not np.isfinite(mean_r):
        return "standard"
    return "adaptive" if mean_r >= threshold else "standard"


def aggregate_trials(reports, threshold=RECOMMENDATION_THRESHOLD):
    """Table-style summary per method, plus adaptive-vs-standard Wilcoxon tests.

    Returns a JSON-serializable dict.
    """
    by_method = {}
    for r in reports:
        by_method.setdefault(r.method, []).append(r)
    counts = {m: len(v) for m, v in by_method.items()}
    if len(set(counts.values())) > 1:
        raise ValueError(f"unequal trial counts per method: {counts}")

    methods = {}
    for m, rs in by_method.items():
        rs = sorted(rs, key=lambda r: r.trial)
        cov = np.array([r.marginal_coverage for r in rs])
        rvals = np.array([r.diagnostic_r for r in rs], dtype=float)
        methods[m] = {
            "trials": len(rs),
            "marginal_coverage_mean": float(cov.mean()),
            "marginal_coverage_std": _sd(cov),
            "marginal_coverage_se": _sd(cov) / math.sqrt(len(rs)),
            "mean_area": float(np.mean([r.mean_area for r in rs])),
            "cond_std": float(np.mean([r.cond_std for r in rs])),
            "worst_bin": float(np.mean([r.worst_bin for r in rs])),
            "diagnostic_r": float(np.nanmean(rvals)) if np.any(np.isfinite(rvals)) else None,
            "bin_coverages": np.mean([r.bin_coverages for r in rs], axis=0).tolist(),
            "degenerate_mean_count": int(sum(r.degenerate_mean_count for r in rs)),
        }

    tests = {}
    if "adaptive" in by_method and "standard" in by_method:
        a = sorted(by_method["adaptive"], key=lambda r: r.trial)
        s = sorted(by_method["standard"], key=lambda r: r.trial)
        for col in ("cond_std", "worst_bin"):
            diffs = np.array([getattr(x, col) - getattr(y, col) for x, y in zip(a, s)])
            try:
                res = wilcoxon_signed_rank(diffs)
                tests[col] = {"statistic": res.statistic, "pvalue": res.pvalue, "method": res.method, "n": res.n}
            except ValueError as exc:
                tests[col] = {"statistic": None, "pvalue": None, "method": f"unavailable: {exc}", "n": 0}

    mean_r = methods.get("adaptive", {}).get("diagnostic_r")
    return {
        "methods": methods,
        "wilcoxon_adaptive_vs_standard": tests,
        "recommendation": recommend_method(mean_r, threshold),
        "recommendation_threshold": threshold,
    }
