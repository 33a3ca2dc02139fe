"""Feed-forward autoencoder written directly in numpy.

Layers are affine maps ``h = a @ W + b`` followed by an activation. Hidden
layers use ``tanh``; the layer producing the bottleneck code and the output
layer are affine only, so both the code and the reconstruction are
unbounded. The training objective is the per-coordinate mean squared
reconstruction error, optimized with Adam and early stopping on a held-out
validation split.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContractError,
    InsufficientDataError,
    ParameterError,
    ShapeError,
    TrainingError,
)
from .numeric import Rng, as_matrix

ACTIVATIONS = ("tanh", "identity")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AeArchitecture:
    """Layer widths ``[m, h1, ..., p, ..., h1, m]`` and one activation per affine layer."""

    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        acts = tuple(self.activations)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "activations", acts)
        if len(sizes) < 3 or len(sizes) % 2 == 0:
            raise ParameterError(f"need an odd number (>= 3) of layer sizes, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ParameterError(f"layer sizes must be positive, got {sizes}")
        if sizes != sizes[::-1]:
            raise ParameterError(f"layer sizes must be symmetric, got {sizes}")
        interior = sizes[1:-1]
        c = len(sizes) // 2
        if interior.count(min(interior)) != 1 or sizes[c] != min(interior):
            raise ParameterError(f"bottleneck must be the unique smallest interior layer: {sizes}")
        if len(acts) != len(sizes) - 1:
            raise ParameterError(f"{len(acts)} activations for {len(sizes) - 1} layers")
        for a in acts:
            if a not in ACTIVATIONS:
                raise ParameterError(f"unknown activation {a!r}")
        if acts[c - 1] != "identity" or acts[-1] != "identity":
            raise ParameterError("bottleneck and output layers must use identity activation")

    @property
    def m(self) -> int:
        return self.layer_sizes[0]

    @property
    def p(self) -> int:
        return self.layer_sizes[len(self.layer_sizes) // 2]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def bottleneck_layer(self) -> int:
        """Index of the affine layer whose output is the latent code."""
        return len(self.layer_sizes) // 2 - 1

    def n_params(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @classmethod
    def symmetric(cls, m: int, p: int, hidden=(), activation: str = "tanh") -> AeArchitecture:
        """``[m, *hidden, p, *reversed(hidden), m]`` with ``activation`` on hidden layers."""
        hidden = tuple(hidden)
        sizes = (m, *hidden, p, *hidden[::-1], m)
        enc = (activation,) * len(hidden) + ("identity",)
        return cls(sizes, enc + enc)

    @classmethod
    def default(cls, m: int, p: int) -> AeArchitecture:
        """Two tanh layers of width ``max(16, 4p)`` on each side."""
        h = max(16, 4 * p)
        return cls.symmetric(m, p, (h, h))

    @classmethod
    def linear(cls, m: int, p: int) -> AeArchitecture:
        return cls.symmetric(m, p, (), "identity")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 20
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ParameterError("batch_size and max_epochs must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ParameterError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )


@dataclass
class ForwardCache:
    """Per-layer inputs and pre-activations kept for :func:`backward`."""

    x: np.ndarray
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    version: int


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_mse: float
    val_mse: float


@dataclass
class AeModel:
    arch: AeArchitecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    train_log: list[EpochLog] = field(default_factory=list)

    def __post_init__(self):
        sizes = self.arch.layer_sizes
        if len(self.weights) != self.arch.n_layers or len(self.biases) != self.arch.n_layers:
            raise ShapeError("one weight matrix and bias vector per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ShapeError(f"layer {i}: weight {w.shape}, bias {b.shape} do not fit {sizes}")
        self._version = 0

    @property
    def m(self) -> int:
        return self.arch.m

    @property
    def p(self) -> int:
        return self.arch.p

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def set_params(self, params: list[np.ndarray]) -> None:
        n = self.arch.n_layers
        self.weights = [np.array(w, dtype=np.float64) for w in params[:n]]
        self.biases = [np.array(b, dtype=np.float64) for b in params[n:]]
        self._version += 1

    def copy(self) -> AeModel:
        return AeModel(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.train_log),
        )

    def _run(self, a: np.ndarray, layers) -> np.ndarray:
        for i in layers:
            a = a @ self.weights[i] + self.biases[i]
            if self.arch.activations[i] == "tanh":
                a = np.tanh(a)
        return a

    def encode(self, x) -> np.ndarray:
        x = _check_cols(x, self.m)
        return self._run(x, range(self.arch.bottleneck_layer + 1))

    def decode(self, z) -> np.ndarray:
        z = _check_cols(z, self.p)
        return self._run(z, range(self.arch.bottleneck_layer + 1, self.arch.n_layers))

    def reconstruct(self, x) -> np.ndarray:
        return self.decode(self.encode(x))

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.arch.layer_sizes),
            "activations": list(self.arch.activations),
            "weights": [[repr(float(v)) for v in w.ravel()] for w in self.weights],
            "biases": [[repr(float(v)) for v in b] for b in self.biases],
            "train_log": [
                {"epoch": e.epoch, "train_mse": repr(e.train_mse), "val_mse": repr(e.val_mse)}
                for e in self.train_log
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> AeModel:
        arch = AeArchitecture(tuple(d["layer_sizes"]), tuple(d["activations"]))
        sizes = arch.layer_sizes
        weights = [
            np.array([float(v) for v in w]).reshape(sizes[i], sizes[i + 1])
            for i, w in enumerate(d["weights"])
        ]
        biases = [np.array([float(v) for v in b]) for b in d["biases"]]
        log = [
            EpochLog(int(e["epoch"]), float(e["train_mse"]), float(e["val_mse"]))
            for e in d.get("train_log", [])
        ]
        return cls(arch, weights, biases, log)


def _check_cols(x, cols: int) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[1] != cols:
        raise ShapeError(f"expected {cols} columns, got {x.shape[1]}")
    return x


def init_model(arch: AeArchitecture, seed: int = 0) -> AeModel:
    """Glorot-uniform weights, zero biases."""
    rng = Rng(seed)
    sizes = arch.layer_sizes
    weights, biases = [], []
    for i in range(arch.n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return AeModel(arch, weights, biases)


def forward(model: AeModel, x) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Reconstruction ``y``, latent code ``z`` and the cache for backprop."""
    x = _check_cols(x, model.m)
    a = x
    inputs, pre = [], []
    z = None
    for i in range(model.arch.n_layers):
        inputs.append(a)
        h = a @ model.weights[i] + model.biases[i]
        pre.append(h)
        a = np.tanh(h) if model.arch.activations[i] == "tanh" else h
        if i == model.arch.bottleneck_layer:
            z = a
    return a, z, ForwardCache(x, inputs, pre, model._version)


def mse(x, y) -> float:
    """Mean over rows and coordinates of the squared difference."""
    d = np.asarray(x) - np.asarray(y)
    return float(np.mean(d * d))


def backward(model: AeModel, x, cache: ForwardCache) -> tuple[list, list]:
    """Gradients of ``mse(x, reconstruction)`` w.r.t. every weight and bias.

    Returns:
        ``(weight_grads, bias_grads)`` shaped like the model parameters.

    Raises:
        ContractError: the cache came from a different input or from
            parameters that have since been updated.
    """
    x = _check_cols(x, model.m)
    if cache.version != model._version or (
        cache.x is not x and (cache.x.shape != x.shape or not np.array_equal(cache.x, x))
    ):
        raise ContractError("forward cache does not match this model state and input")
    n_layers = model.arch.n_layers
    last = cache.pre[-1]
    y = np.tanh(last) if model.arch.activations[-1] == "tanh" else last
    delta = 2.0 * (y - x) / x.size
    gw = [None] * n_layers
    gb = [None] * n_layers
    for i in reversed(range(n_layers)):
        if model.arch.activations[i] == "tanh":
            delta = delta * (1.0 - np.tanh(cache.pre[i]) ** 2)
        gw[i] = cache.inputs[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ model.weights[i].T
    return gw, gb


def loss_and_grad(model: AeModel, x) -> tuple[float, list[np.ndarray]]:
    y, _, cache = forward(model, x)
    gw, gb = backward(model, x, cache)
    return mse(x, y), [*gw, *gb]


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float):
        self.lr = lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - ADAM_BETA1**self.t
        c2 = 1.0 - ADAM_BETA2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def train(train_x, arch: AeArchitecture, cfg: TrainConfig = TrainConfig()) -> AeModel:
    """Fit an autoencoder with Adam and validation-based early stopping.

    A ``validation_fraction`` share of the rows is held out (seeded). After
    every epoch the train and validation MSE are logged; training stops after
    ``patience`` epochs without a strict validation improvement, and the
    parameters of the best epoch are returned.

    Raises:
        TrainingError: the loss became non-finite; the message names the epoch.
    """
    x = _check_cols(train_x, arch.m)
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError("training needs at least 2 rows")
    rng = Rng(cfg.seed)
    perm = rng.child(0).permutation(n)
    n_val = min(max(1, int(round(cfg.validation_fraction * n))), n - 1)
    x_val, x_fit = x[perm[:n_val]], x[perm[n_val:]]

    model = init_model(arch, rng.child(1).seed)
    params = model.params()  # updated in place by the optimizer
    opt = _Adam(params, cfg.learning_rate)
    n_fit = x_fit.shape[0]
    batch_size = min(cfg.batch_size, n_fit)  # larger values mean full batch
    best_val, best_params, stale = np.inf, None, 0
    log: list[EpochLog] = []

    # overflow shows up as a non-finite loss, reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.max_epochs):
            order = rng.child(2, epoch).permutation(n_fit)
            for start in range(0, n_fit, batch_size):
                batch = x_fit[order[start : start + batch_size]]
                loss, grads = loss_and_grad(model, batch)
                if not np.isfinite(loss):
                    raise TrainingError(f"training diverged at epoch {epoch} (non-finite loss)")
                opt.step(params, grads)
                model._version += 1
            train_mse = mse(x_fit, forward(model, x_fit)[0])
            val_mse = mse(x_val, forward(model, x_val)[0])
            if not (np.isfinite(train_mse) and np.isfinite(val_mse)):
                raise TrainingError(f"training diverged at epoch {epoch} (non-finite loss)")
            log.append(EpochLog(epoch, train_mse, val_mse))
            if val_mse < best_val:
                best_val, best_params, stale = val_mse, [p.copy() for p in params], 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    model.set_params(best_params)
    model.train_log = log
    return model


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    n_params: int
    passed: bool


def numeric_gradient(model: AeModel, x, step: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of :func:`mse` for every parameter."""
    x = as_matrix(x)
    params = [p.copy() for p in model.params()]
    probe = model.copy()
    grads = []
    for k, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in itertools.product(*map(range, p.shape)):
            orig = p[idx]
            p[idx] = orig + step
            probe.set_params(params)
            up = mse(x, probe.reconstruct(x))
            p[idx] = orig - step
            probe.set_params(params)
            down = mse(x, probe.reconstruct(x))
            p[idx] = orig
            g[idx] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def grad_check(
    arch: AeArchitecture,
    tolerance: float = 1e-4,
    seed: int = 0,
    abs_tolerance: float = 1e-7,
    n_rows: int = 5,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare :func:`backward` against central differences on a random net.

    Weights, biases and inputs are random; an entry passes when its absolute
    deviation is within ``abs_tolerance`` or its relative deviation within
    ``tolerance``. The reported relative error is the worst over entries that
    miss the absolute bound.
    """
    if arch.n_params() > 500:
        raise ParameterError(f"grad_check is meant for small nets, got {arch.n_params()} params")
    rng = Rng(seed)
    model = init_model(arch, rng.child(0).seed)
    model.set_params(
        [*model.weights, *[rng.child(1, i).gaussian(b.size, 0.0, 0.5) for i, b in enumerate(model.biases)]]
    )
    x = rng.child(2).gaussian(n_rows * arch.m).reshape(n_rows, arch.m)
    _, analytic = loss_and_grad(model, x)
    numeric = numeric_gradient(model, x, step)
    a = np.concatenate([g.ravel() for g in analytic])
    nm = np.concatenate([g.ravel() for g in numeric])
    diff = np.abs(a - nm)
    rel = diff / np.maximum(np.maximum(np.abs(a), np.abs(nm)), 1e-300)
    rel = np.where(diff <= abs_tolerance, 0.0, rel)
    max_rel = float(rel.max(initial=0.0))
    return GradCheckReport(max_rel, float(diff.max(initial=0.0)), a.size, max_rel <= tolerance)
