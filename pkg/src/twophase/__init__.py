"""Dimensionality reduction and two-phase anomaly detection for multivariate sensor data."""

__version__ = "0.1.0"

from .autoenc import AeArchitecture, AeModel, TrainConfig, train
from .dataio import Dataset, Normalizer, fit_normalizer, kfold, load_csv, save_csv
from .detect import (
    FirstPhaseDetector,
    SecondPhaseDetector,
    calibrate_threshold,
    detect,
    fit_second_phase,
    reconstruction_scores,
)
from .dimsweep import SweepConfig, SweepResult, estimate_dim, sweep
from .metrics import EvalReport, RocCurve, confusion, roc_auc
from .pca import PcaModel, fit_pca
from .synth import (
    NonlinPoolParams,
    WaterTankParams,
    gen_nonlin_pool,
    gen_watertank,
    gen_watertank_anomalies,
)

__all__ = [
    "AeArchitecture", "AeModel", "TrainConfig", "train",
    "Dataset", "Normalizer", "fit_normalizer", "kfold", "load_csv", "save_csv",
    "FirstPhaseDetector", "SecondPhaseDetector", "calibrate_threshold", "detect",
    "fit_second_phase", "reconstruction_scores",
    "SweepConfig", "SweepResult", "estimate_dim", "sweep",
    "EvalReport", "RocCurve", "confusion", "roc_auc",
    "PcaModel", "fit_pca",
    "NonlinPoolParams", "WaterTankParams", "gen_nonlin_pool", "gen_watertank",
    "gen_watertank_anomalies",
]
