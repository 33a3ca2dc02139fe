"""Synthetic data with known manifolds and known anomalies.

Two generators:

* the water tank, two noisy signals tied by ``q_o = a * sqrt(H)``;
* a nonlinearity pool, where a ``latent_dim``-dimensional uniform draw is
  expanded into ``obs_dim`` observables through products, cubes, paired
  waveforms of a shared phase and linear mixtures.

Both are pure functions of their parameters (seed included).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import Dataset
from .errors import ParameterError
from .numeric import Rng, gaussian

ANOMALY_KINDS = ("off_manifold", "out_of_range")
POOL_OPS = ("product", "cube", "time_pair", "linear_mix")

# off-manifold displacement, in units of noise_std, along the curve normal
OFF_MANIFOLD_MARGIN = (6.0, 10.0)
# out-of-range water levels above h_max, as fractions of (h_max - h_min)
OUT_OF_RANGE_SPAN = (0.02, 0.10)


@dataclass(frozen=True)
class WaterTankParams:
    a: float = 1.0
    h_min: float = 1.0
    h_max: float = 10.0
    noise_std: float = 0.02
    n: int = 10000
    seed: int = 0

    def validate(self, allow_degenerate: bool = True) -> None:
        if self.a <= 0:
            raise ParameterError(f"a must be > 0, got {self.a}")
        if self.h_min <= 0:
            raise ParameterError(f"h_min must be > 0, got {self.h_min}")
        if self.h_max < self.h_min or (self.h_max == self.h_min and not allow_degenerate):
            raise ParameterError(f"need h_min < h_max, got {self.h_min}, {self.h_max}")
        if self.noise_std < 0:
            raise ParameterError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")


WATERTANK_COLUMNS = ("H", "q_o")


def gen_watertank(p: WaterTankParams) -> Dataset:
    """Normal water-tank observations ``(H + e1, a*sqrt(H) + e2)``.

    ``h_min == h_max`` is accepted as a degenerate uniform (fixed level).
    """
    p.validate()
    rng = Rng(p.seed)
    h = rng.uniform(p.h_min, p.h_max, size=p.n)
    q = p.a * np.sqrt(h)
    noise = rng.child(1)
    x = np.column_stack(
        [h + gaussian(noise, p.n, 0.0, p.noise_std), q + gaussian(noise, p.n, 0.0, p.noise_std)]
    )
    return Dataset(x, np.zeros(p.n, dtype=np.int64), WATERTANK_COLUMNS)


def watertank_residual(x, a: float) -> np.ndarray:
    """``q_o - a*sqrt(H)`` per row (NaN where ``H < 0``)."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return x[:, 1] - a * np.sqrt(x[:, 0])


def gen_watertank_anomalies(p: WaterTankParams, kinds, count: int) -> Dataset:
    """Labelled anomalies for the water tank.

    ``count`` rows are produced per requested kind:

    * ``off_manifold``: a normal operating point moved along the curve's
      normal by 6 to 10 noise standard deviations, either side.
    * ``out_of_range``: a level 2 % to 10 % of the range above ``h_max``,
      with the flow exactly on the curve.
    """
    p.validate()
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if isinstance(kinds, str):
        kinds = [kinds]
    kinds = list(kinds)
    for kind in kinds:
        if kind not in ANOMALY_KINDS:
            raise ParameterError(f"unknown anomaly kind {kind!r}; expected one of {ANOMALY_KINDS}")
    rows = []
    span = p.h_max - p.h_min
    base = Rng(p.seed).child(2)
    for kind in kinds:
        rng = base.child(ANOMALY_KINDS.index(kind))
        if kind == "off_manifold":
            h = rng.uniform(p.h_min, p.h_max, size=count)
            slope = p.a / (2.0 * np.sqrt(h))
            norm = np.sqrt(1.0 + slope**2)
            lo, hi = OFF_MANIFOLD_MARGIN
            d = rng.uniform(lo, hi, size=count) * max(p.noise_std, 1e-3)
            side = np.where(rng.uniform(size=count) < 0.5, -1.0, 1.0)
            rows.append(
                np.column_stack(
                    [h - side * d * slope / norm, p.a * np.sqrt(h) + side * d / norm]
                )
            )
        else:
            lo, hi = OUT_OF_RANGE_SPAN
            h = p.h_max + span * rng.uniform(lo, hi, size=count) if span > 0 else (
                p.h_max * (1.0 + rng.uniform(lo, hi, size=count))
            )
            rows.append(np.column_stack([h, p.a * np.sqrt(h)]))
    x = np.vstack(rows)
    return Dataset(x, np.ones(x.shape[0], dtype=np.int64), WATERTANK_COLUMNS)


@dataclass(frozen=True)
class NonlinPoolParams:
    latent_dim: int = 2
    obs_dim: int = 6
    ops: tuple[str, ...] = ("cube", "product")
    noise_std: float = 0.01
    n: int = 2000
    seed: int = 0

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise ParameterError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.obs_dim < self.latent_dim:
            raise ParameterError(
                f"obs_dim ({self.obs_dim}) must be >= latent_dim ({self.latent_dim})"
            )
        if not self.ops:
            raise ParameterError("ops must not be empty")
        for op in self.ops:
            if op not in POOL_OPS:
                raise ParameterError(f"unknown op {op!r}; expected one of {POOL_OPS}")
        if self.noise_std < 0:
            raise ParameterError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")


@dataclass
class Manifest:
    """Per-column generating formulas of a nonlinearity-pool dataset."""

    latent_dim: int
    noise_std: float
    seed: int
    columns: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "obs_dim": len(self.columns),
            "noise_std": self.noise_std,
            "seed": self.seed,
            "latent_distribution": "uniform(-1, 1)",
            "columns": self.columns,
        }

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _pulse(t):
    return np.exp(-(((t - 0.5) / 0.15) ** 2))


def evaluate_column(spec: dict, z: np.ndarray) -> np.ndarray:
    """Noise-free value of one manifest column given the latent draw."""
    op, src = spec["op"], spec["latent"]
    if op == "latent":
        return z[:, src[0]].copy()
    if op == "product":
        return z[:, src[0]] * z[:, src[1]]
    if op == "cube":
        return z[:, src[0]] ** 3
    if op in ("time_sin", "time_pulse"):
        t = 0.5 * (z[:, src[0]] + 1.0)
        return np.sin(2.0 * np.pi * t) if op == "time_sin" else _pulse(t)
    if op == "linear_mix":
        return z[:, src] @ np.asarray(spec["weights"], dtype=np.float64)
    raise ParameterError(f"unknown column op {op!r}")


def gen_nonlin_pool(p: NonlinPoolParams) -> tuple[Dataset, Manifest]:
    """Observables built from a uniform latent draw via the nonlinearity pool.

    The first ``latent_dim`` columns are the latent coordinates themselves.
    The remaining columns cycle through ``p.ops``; the latent indices each op
    uses are drawn from the seed. ``time_pair`` contributes two columns
    (a sine and a smooth pulse of one shared phase) when room remains.
    """
    p.validate()
    rng = Rng(p.seed)
    z = rng.uniform(-1.0, 1.0, size=(p.n, p.latent_dim))
    pick = rng.child(1)
    d = p.latent_dim
    cols = [{"op": "latent", "latent": [i], "formula": f"z{i}"} for i in range(d)]
    k = 0
    while len(cols) < p.obs_dim:
        op = p.ops[k % len(p.ops)]
        k += 1
        if op == "product":
            if d >= 2:
                i, j = sorted(int(v) for v in pick.permutation(d)[:2])
            else:
                i = j = 0
            cols.append({"op": "product", "latent": [i, j], "formula": f"z{i}*z{j}"})
        elif op == "cube":
            i = int(pick.integers(0, d))
            cols.append({"op": "cube", "latent": [i], "formula": f"z{i}**3"})
        elif op == "time_pair":
            i = int(pick.integers(0, d))
            cols.append({"op": "time_sin", "latent": [i], "formula": f"sin(2*pi*t), t=(z{i}+1)/2"})
            if len(cols) < p.obs_dim:
                cols.append(
                    {
                        "op": "time_pulse",
                        "latent": [i],
                        "formula": f"exp(-((t-0.5)/0.15)**2), t=(z{i}+1)/2",
                    }
                )
        else:
            w = pick.gaussian(d)
            cols.append(
                {
                    "op": "linear_mix",
                    "latent": list(range(d)),
                    "weights": [float(v) for v in w],
                    "formula": " + ".join(f"{float(wi)!r}*z{i}" for i, wi in enumerate(w)),
                }
            )
    cols = [{"name": f"x{c}", **spec} for c, spec in enumerate(cols)]
    clean = np.column_stack([evaluate_column(spec, z) for spec in cols])
    noise = gaussian(rng.child(2), clean.size, 0.0, p.noise_std).reshape(clean.shape)
    ds = Dataset(clean + noise, np.zeros(p.n, dtype=np.int64), tuple(c["name"] for c in cols))
    return ds, Manifest(p.latent_dim, p.noise_std, p.seed, cols)
