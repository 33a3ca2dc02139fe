"""Principal component analysis as a linear encoder/decoder pair.

``encode(x) = x W^T`` and ``decode(z) = z W`` where the rows of ``W`` are the
leading eigenvectors of the training covariance. Inputs are expected to be
normalized already, so no centering happens here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ParameterError, ShapeError
from .numeric import as_matrix, sym_eigen


@dataclass(frozen=True)
class PcaModel:
    """Fitted PCA projection.

    Attributes:
        w: ``(p, m)`` matrix with orthonormal rows (the principal axes).
        explained: Variance fraction of every one of the ``m`` components,
            descending. Only the first ``p`` are used for encoding.
        mean_removed: Always ``False``: centering is the normalizer's job.
    """

    w: np.ndarray
    explained: np.ndarray
    mean_removed: bool = False

    @property
    def p(self) -> int:
        return self.w.shape[0]

    @property
    def m(self) -> int:
        return self.w.shape[1]

    def encode(self, x) -> np.ndarray:
        x = as_matrix(x)
        if x.shape[1] != self.m:
            raise ShapeError(f"PCA expects {self.m} columns, got {x.shape[1]}")
        return x @ self.w.T

    def decode(self, z) -> np.ndarray:
        z = as_matrix(z)
        if z.shape[1] != self.p:
            raise ShapeError(f"PCA latent has {self.p} columns, got {z.shape[1]}")
        return z @ self.w

    def reconstruct(self, x) -> np.ndarray:
        return self.decode(self.encode(x))

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "m": self.m,
            "w": [repr(float(v)) for v in self.w.ravel()],
            "explained": [repr(float(v)) for v in self.explained],
            "mean_removed": self.mean_removed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> PcaModel:
        w = np.array([float(v) for v in d["w"]]).reshape(d["p"], d["m"])
        explained = np.array([float(v) for v in d["explained"]])
        return cls(w, explained, bool(d.get("mean_removed", False)))


def covariance(x: np.ndarray) -> np.ndarray:
    """Population covariance (``1/n``) of the rows of ``x`` about their mean.

    ``1/n`` matches the normalizer, so on centered data the discarded
    eigenvalues sum to ``m`` times the per-coordinate reconstruction MSE.
    """
    xc = x - x.mean(axis=0)
    c = xc.T @ xc / x.shape[0]
    return 0.5 * (c + c.T)


def fit_pca(train, p: int) -> PcaModel:
    """Top-``p`` eigenvectors of the training covariance.

    Raises:
        ParameterError: ``p`` outside ``[1, m]``.
        InsufficientDataError: fewer than 2 rows.
    """
    x = as_matrix(train, "train")
    n, m = x.shape
    if not 1 <= p <= m:
        raise ParameterError(f"p must be in [1, {m}], got {p}")
    if n < 2:
        raise InsufficientDataError(f"PCA needs at least 2 rows, got {n}")
    vals, vecs = sym_eigen(covariance(x))
    vals = np.clip(vals, 0.0, None)
    total = vals.sum()
    explained = vals / total if total > 0 else np.zeros(m)
    return PcaModel(vecs[:, :p].T.copy(), explained)


def encode(model: PcaModel, x) -> np.ndarray:
    return model.encode(x)


def decode(model: PcaModel, z) -> np.ndarray:
    return model.decode(z)
