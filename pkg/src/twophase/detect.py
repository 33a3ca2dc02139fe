"""Two-phase anomaly detection.

Phase one flags observations whose reconstruction error exceeds a threshold
calibrated on normal training data. Phase two runs a detector inside the
latent space of the same model (nearest neighbour, k-means or a per-axis
box). An observation is anomalous if either phase flags it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, ParameterError, ShapeError
from .numeric import Rng, as_matrix

SECOND_PHASE_KINDS = ("knn", "kmeans", "hypercube")
KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-8
KMEANS_RESTARTS = 5


class Reducer(Protocol):
    p: int
    m: int

    def encode(self, x) -> np.ndarray: ...

    def decode(self, z) -> np.ndarray: ...


def reconstruction_scores(model: Reducer, x) -> np.ndarray:
    """Per-row squared reconstruction error divided by the number of columns."""
    x = as_matrix(x)
    if x.shape[1] != model.m:
        raise ShapeError(f"model expects {model.m} columns, got {x.shape[1]}")
    r = model.decode(model.encode(x))
    return np.mean((x - r) ** 2, axis=1)


def calibrate_threshold(scores, q: float) -> float:
    """Nearest-rank empirical quantile: the ``ceil(q*n)``-th smallest score."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ParameterError("cannot calibrate a threshold on zero scores")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"quantile must be in (0, 1), got {q}")
    # guard against q*n landing a hair above an integer
    rank = max(1, math.ceil(round(q * s.size, 9)))
    return float(np.partition(s, rank - 1)[rank - 1])


@dataclass(frozen=True)
class FirstPhaseDetector:
    model: Reducer
    mse_threshold: float
    threshold_quantile: float

    @classmethod
    def fit(cls, model: Reducer, x_train, q: float = 0.999) -> FirstPhaseDetector:
        scores = reconstruction_scores(model, x_train)
        return cls(model, calibrate_threshold(scores, q), q)

    def with_threshold(self, threshold: float) -> FirstPhaseDetector:
        return FirstPhaseDetector(self.model, float(threshold), self.threshold_quantile)


@dataclass(frozen=True)
class SecondPhaseDetector:
    """Latent-space detector.

    ``state`` holds the training points (knn), the centroids (kmeans) or a
    ``(2, p)`` array of lower/upper bounds (hypercube).
    """

    kind: str
    params: dict
    state: np.ndarray
    score_threshold: float
    threshold_quantile: float

    @property
    def p(self) -> int:
        return self.state.shape[1]

    def score(self, z) -> np.ndarray:
        return second_phase_score(self, z)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "state_shape": list(self.state.shape),
            "state": [repr(float(v)) for v in self.state.ravel()],
            "score_threshold": repr(self.score_threshold),
            "threshold_quantile": self.threshold_quantile,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SecondPhaseDetector:
        state = np.array([float(v) for v in d["state"]]).reshape(d["state_shape"])
        return cls(
            d["kind"], dict(d["params"]), state, float(d["score_threshold"]),
            float(d["threshold_quantile"]),
        )


def _nearest_distances(points: np.ndarray, z: np.ndarray, k: int) -> np.ndarray:
    tree = cKDTree(points)
    d, _ = tree.query(z, k=k)
    d = np.asarray(d).reshape(z.shape[0], -1)
    return d[:, k - 1]


def _knn_self_excluded(points: np.ndarray, k: int) -> np.ndarray:
    """Distance from each stored point to its k-th nearest *other* stored point."""
    n = points.shape[0]
    tree = cKDTree(points)
    d, idx = tree.query(points, k=k + 1)
    d = np.asarray(d).reshape(n, k + 1)
    idx = np.asarray(idx).reshape(n, k + 1)
    own = idx == np.arange(n)[:, None]
    # with exact duplicates the point itself may not be returned; drop the farthest instead
    missing = ~own.any(axis=1)
    own[missing, k] = True
    return d[~own].reshape(n, k)[:, k - 1]


def _kmeans_pp_init(x: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.choice(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.choice(n)
        centers.append(x[i])
        d2 = np.minimum(d2, np.sum((x - x[i]) ** 2, axis=1))
    return np.array(centers)


def _assign(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = np.empty((x.shape[0], centers.shape[0]))
    for j, c in enumerate(centers):
        d2[:, j] = np.sum((x - c) ** 2, axis=1)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(x.shape[0]), labels]


def lloyd(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, list[float]]:
    """Lloyd iterations from ``centers``; returns final centers and the objective per iteration.

    Stops when no centroid moves by more than 1e-8 or after 300 iterations.
    An emptied cluster keeps its previous centroid.
    """
    centers = centers.copy()
    history = []
    for _ in range(KMEANS_MAX_ITER):
        labels, d2 = _assign(x, centers)
        history.append(float(d2.sum()))
        new = centers.copy()
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                new[j] = x[members].mean(axis=0)
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < KMEANS_TOL:
            break
    history.append(float(_assign(x, centers)[1].sum()))
    return centers, history


def kmeans(x, k: int, seed: int = 0, restarts: int = KMEANS_RESTARTS) -> np.ndarray:
    """Best-of-``restarts`` k-means (k-means++ seeding) by final objective."""
    x = as_matrix(x)
    if not 1 <= k <= x.shape[0]:
        raise ParameterError(f"kmeans needs 1 <= k <= n, got k={k}, n={x.shape[0]}")
    rng = Rng(seed)
    best, best_obj = None, np.inf
    for r in range(restarts):
        centers, hist = lloyd(x, _kmeans_pp_init(x, k, rng.child(r)))
        if hist[-1] < best_obj:
            best, best_obj = centers, hist[-1]
    return best


def fit_second_phase(kind: str, params: dict | None, latent_train, q: float = 0.999,
                     seed: int = 0) -> SecondPhaseDetector:
    """Fit a latent-space detector and calibrate its score threshold on training scores.

    Args:
        kind: ``"knn"`` (param ``k``, default 1), ``"kmeans"`` (param ``k``,
            default 9) or ``"hypercube"``.
        latent_train: Encoded normal training data.
        q: Quantile used for the score threshold and, for the hypercube, for
            the per-axis bounds (tail mass ``(1-q)/2`` on each side).
        seed: Seed for k-means initialization.

    For knn the calibration scores exclude each point's distance to itself.
    """
    if kind not in SECOND_PHASE_KINDS:
        raise ParameterError(f"unknown second phase {kind!r}; expected one of {SECOND_PHASE_KINDS}")
    z = as_matrix(latent_train, "latent_train")
    n = z.shape[0]
    if n == 0:
        raise ParameterError("latent_train is empty")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"quantile must be in (0, 1), got {q}")
    params = dict(params or {})

    if kind == "knn":
        k = int(params.setdefault("k", 1))
        if not 1 <= k < n:
            raise ParameterError(f"knn needs 1 <= k < n, got k={k}, n={n}")
        state = z.copy()
        train_scores = _knn_self_excluded(state, k)
    elif kind == "kmeans":
        k = int(params.setdefault("k", 9))
        if k > n:
            raise ParameterError(f"kmeans needs k <= n, got k={k}, n={n}")
        state = kmeans(z, k, seed)
        train_scores = np.sqrt(_assign(z, state)[1])
    else:
        tail = (1.0 - q) / 2.0
        s = np.sort(z, axis=0)
        lo_rank = max(1, math.ceil(round(tail * n, 9)))
        hi_rank = max(1, math.ceil(round((1.0 - tail) * n, 9)))
        state = np.vstack([s[lo_rank - 1], s[hi_rank - 1]])
        train_scores = _box_excursion(state, z)
    return SecondPhaseDetector(kind, params, state, calibrate_threshold(train_scores, q), q)


def _box_excursion(bounds: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.max(np.maximum(bounds[0] - z, z - bounds[1]), axis=1)


def second_phase_score(det: SecondPhaseDetector, z) -> np.ndarray:
    """knn: distance to k-th nearest stored point; kmeans: distance to nearest
    centroid; hypercube: largest signed excursion beyond the bounds (<= 0 inside)."""
    z = as_matrix(z)
    if z.shape[1] != det.p:
        raise ShapeError(f"detector fitted on {det.p} latent dims, got {z.shape[1]}")
    if det.kind == "knn":
        return _nearest_distances(det.state, z, int(det.params["k"]))
    if det.kind == "kmeans":
        return np.sqrt(_assign(z, det.state)[1])
    return _box_excursion(det.state, z)


@dataclass(frozen=True)
class DetectionResult:
    """Column-wise detection output for ``n`` observations."""

    reconstruction_error: np.ndarray
    latent: np.ndarray
    anomaly1: np.ndarray
    mse_threshold: float
    second_score: np.ndarray | None = None
    anomaly2: np.ndarray | None = None
    second_threshold: float | None = None

    @property
    def anomaly(self) -> np.ndarray:
        if self.anomaly2 is None:
            return self.anomaly1.copy()
        return self.anomaly1 | self.anomaly2

    @property
    def combined_score(self) -> np.ndarray:
        """Largest margin over the thresholds; positive exactly when ``anomaly`` is set."""
        margin = self.reconstruction_error - self.mse_threshold
        if self.second_score is not None:
            margin = np.maximum(margin, self.second_score - self.second_threshold)
        return margin

    def __len__(self) -> int:
        return self.reconstruction_error.shape[0]

    def records(self):
        combined = self.combined_score
        anomaly = self.anomaly
        for i in range(len(self)):
            rec = {
                "index": i,
                "recon_error": repr(float(self.reconstruction_error[i])),
                "latent": [repr(float(v)) for v in self.latent[i]],
                "anomaly1": bool(self.anomaly1[i]),
            }
            if self.anomaly2 is not None:
                rec["second_score"] = repr(float(self.second_score[i]))
                rec["anomaly2"] = bool(self.anomaly2[i])
            rec["combined_score"] = repr(float(combined[i]))
            rec["anomaly"] = bool(anomaly[i])
            yield rec

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


def detect(first: FirstPhaseDetector, second: SecondPhaseDetector | None, x_test) -> DetectionResult:
    """Run both phases on ``x_test`` (already normalized with the training statistics)."""
    model = first.model
    if second is not None and second.p != model.p:
        raise ConfigError(
            f"second phase fitted on {second.p} latent dims, model has p={model.p}"
        )
    x = as_matrix(x_test)
    if x.shape[1] != model.m:
        raise ShapeError(f"model expects {model.m} columns, got {x.shape[1]}")
    z = model.encode(x)
    r = model.decode(z)
    err = np.mean((x - r) ** 2, axis=1)
    anomaly1 = err > first.mse_threshold
    if second is None:
        return DetectionResult(err, z, anomaly1, first.mse_threshold)
    s2 = second_phase_score(second, z)
    return DetectionResult(
        err, z, anomaly1, first.mse_threshold, s2, s2 > second.score_threshold,
        second.score_threshold,
    )


def parse_second_phase(spec: str) -> tuple[str, dict]:
    """Parse ``kind[:key=value[,key=value]]``, e.g. ``knn:k=1`` or ``hypercube``."""
    kind, _, rest = spec.strip().partition(":")
    kind = kind.strip()
    if kind not in SECOND_PHASE_KINDS:
        raise ConfigError(f"unknown second phase {kind!r}; expected one of {SECOND_PHASE_KINDS}")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"malformed second-phase option {item!r}; expected key=value")
        try:
            params[key.strip()] = int(value)
        except ValueError:
            raise ConfigError(f"second-phase option {key!r} must be an integer") from None
    allowed = {"knn": {"k"}, "kmeans": {"k"}, "hypercube": set()}[kind]
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"{kind} does not take option(s) {sorted(unknown)}")
    return kind, params
