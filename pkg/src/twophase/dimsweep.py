"""Reconstruction error as a function of the latent size, and the intrinsic
dimension read off that curve.

Every (p, fold) cell refits the normalizer on its training folds, fits the
reducer, and scores the held-out fold. Cells only depend on seeds derived
from ``(seed, p, fold)``, so running them in parallel gives the same grid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .autoenc import AeArchitecture, TrainConfig, train
from .dataio import Dataset, fit_normalizer, kfold
from .errors import EstimationError, ParameterError, TwoPhaseError
from .numeric import Rng, as_matrix, derive_seed
from .pca import fit_pca

METHODS = ("pca", "ae")


@dataclass(frozen=True)
class SweepConfig:
    """Settings for :func:`sweep`.

    ``arch_rule(m, p)`` builds the autoencoder for each latent size; the
    default is :meth:`AeArchitecture.default`.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    arch_rule: Callable[[int, int], AeArchitecture] = AeArchitecture.default
    seed: int = 0
    n_jobs: int = 1


@dataclass
class SweepResult:
    method: str
    p_values: np.ndarray
    fold_mse: np.ndarray  # (len(p_values), folds)
    estimated_dim: int | None = None
    used_fallback: bool = False

    @property
    def mse_mean(self) -> np.ndarray:
        return self.fold_mse.mean(axis=1)

    @property
    def mse_min(self) -> np.ndarray:
        return self.fold_mse.min(axis=1)

    @property
    def mse_std(self) -> np.ndarray:
        return self.fold_mse.std(axis=1)

    def at(self, p: int) -> int:
        return int(np.flatnonzero(self.p_values == p)[0])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "p_values": self.p_values.tolist(),
            "mse_min": [repr(float(v)) for v in self.mse_min],
            "mse_mean": [repr(float(v)) for v in self.mse_mean],
            "mse_std": [repr(float(v)) for v in self.mse_std],
            "fold_mse": [[repr(float(v)) for v in row] for row in self.fold_mse],
            "estimated_dim": self.estimated_dim,
            "used_fallback": self.used_fallback,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["p", "mse_min", "mse_mean", "mse_std", "method"])
            for i, p in enumerate(self.p_values):
                w.writerow([int(p), repr(float(self.mse_min[i])), repr(float(self.mse_mean[i])),
                            repr(float(self.mse_std[i])), self.method])


def _cell(x: np.ndarray, train_idx, val_idx, method: str, p: int, fold: int,
          cfg: SweepConfig) -> float:
    try:
        norm = fit_normalizer(x[train_idx])
        xt, xv = norm.apply(x[train_idx]), norm.apply(x[val_idx])
        if method == "pca":
            model = fit_pca(xt, p)
        else:
            tc = cfg.train
            tc = TrainConfig(tc.learning_rate, tc.batch_size, tc.max_epochs, tc.patience,
                             tc.validation_fraction, derive_seed(cfg.seed, p, fold))
            model = train(xt, cfg.arch_rule(x.shape[1], p), tc)
        r = model.reconstruct(xv)
        return float(np.mean((xv - r) ** 2))
    except TwoPhaseError as exc:
        raise type(exc)(f"sweep cell p={p}, fold={fold}: {exc}") from exc


def sweep(data, method: str, p_range, folds: int = 5, cfg: SweepConfig | None = None) -> SweepResult:
    """Cross-validated reconstruction MSE for every latent size in ``p_range``.

    Args:
        data: :class:`Dataset` or raw ``(n, m)`` array (unnormalized).
        method: ``"pca"`` or ``"ae"``.
        p_range: Increasing latent sizes within ``[1, m]``.
        folds: Number of cross-validation folds (>= 2).
    """
    cfg = cfg or SweepConfig()
    if method not in METHODS:
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    x = data.x if isinstance(data, Dataset) else as_matrix(data)
    m = x.shape[1]
    ps = np.asarray(list(p_range), dtype=np.int64)
    if ps.size == 0 or np.any(np.diff(ps) <= 0) or ps[0] < 1 or ps[-1] > m:
        raise ParameterError(f"p_range must be strictly increasing within [1, {m}]")
    if folds < 2:
        raise ParameterError(f"folds must be >= 2, got {folds}")
    plan = kfold(x.shape[0], folds, Rng(derive_seed(cfg.seed, 0xF01D)))
    cells = [(i, f) for i in range(ps.size) for f in range(folds)]

    def run(i, f):
        tr, va = plan.split(f)
        return _cell(x, tr, va, method, int(ps[i]), f, cfg)

    if cfg.n_jobs == 1:
        values = [run(i, f) for i, f in cells]
    else:
        from joblib import Parallel, delayed

        values = Parallel(n_jobs=cfg.n_jobs)(delayed(run)(i, f) for i, f in cells)
    grid = np.empty((ps.size, folds))
    for (i, f), v in zip(cells, values):
        grid[i, f] = v
    res = SweepResult(method, ps, grid)
    try:
        est = estimate_dim(res)
        res.estimated_dim, res.used_fallback = est.dim, est.used_fallback
    except EstimationError:
        pass
    return res


class DimEstimate(NamedTuple):
    dim: int
    used_fallback: bool


def estimate_dim(sweep: SweepResult, fraction: float = 0.01, baseline: float = 1.0) -> DimEstimate:
    """Smallest p whose best-fold MSE falls below ``fraction * baseline``.

    ``baseline`` is the per-coordinate variance of normalized data (1.0).
    When no p qualifies, the elbow of the curve is returned instead: the p
    with the largest second difference of ``log(mse_min)``, flagged via
    ``used_fallback``.

    Raises:
        EstimationError: nothing qualifies and the curve has fewer than
            3 points.
    """
    ps = np.asarray(sweep.p_values)
    mse = np.asarray(sweep.mse_min, dtype=np.float64)
    below = np.flatnonzero(mse / baseline < fraction)
    if below.size:
        return DimEstimate(int(ps[below[0]]), False)
    if ps.size < 3:
        raise EstimationError("no p reaches the error fraction and the curve is too short for an elbow")
    logm = np.log(np.maximum(mse, np.finfo(float).tiny))
    curvature = logm[:-2] - 2.0 * logm[1:-1] + logm[2:]
    return DimEstimate(int(ps[1 + int(np.argmax(curvature))]), True)
