"""Adaptive geodesic conformal prediction on the sphere and the flat torus."""
from .conformal import (
    METHODS,
    ChartRect,
    GeodesicCap,
    GeodesicConformalRegressor,
    ScoreMethod,
    conformal_quantile,
    nonconformity_score,
    region_area,
    region_contains,
)
from .dataset import Dataset, Manifold
from .difficulty import DifficultyEstimator, cv_residuals, fit_difficulty
from .experiment import ExperimentConfig, emit_report, run_experiment, run_trial
from .geometry import ChartPoint, SpherePoint, TorusPoint
from .metrics import TrialReport, aggregate_trials, wilcoxon_signed_rank
from .predict import KnnManifoldRegressor, circular_mean, extrinsic_mean
from .vmf import SyntheticConfig, generate_synthetic_dataset, sample_vmf

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "ChartPoint",
    "ChartRect",
    "Dataset",
    "DifficultyEstimator",
    "ExperimentConfig",
    "GeodesicCap",
    "GeodesicConformalRegressor",
    "KnnManifoldRegressor",
    "Manifold",
    "ScoreMethod",
    "SpherePoint",
    "SyntheticConfig",
    "TorusPoint",
    "TrialReport",
    "aggregate_trials",
    "circular_mean",
    "conformal_quantile",
    "cv_residuals",
    "emit_report",
    "extrinsic_mean",
    "fit_difficulty",
    "generate_synthetic_dataset",
    "nonconformity_score",
    "region_area",
    "region_contains",
    "run_experiment",
    "run_trial",
    "sample_vmf",
    "wilcoxon_signed_rank",
]
