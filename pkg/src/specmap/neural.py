"""Dense tanh network with hand-written reverse-mode gradients.

The network maps normalized coordinates (x, y) to a standardized output
``u``; received power is recovered as ``z = z_mean + z_std * u``. Weights
are stored as (fan_in, fan_out) matrices so a batch forward pass is
``a_next = tanh(a @ W + b)``, with the last layer left linear.

Random numbers come from numpy's PCG64 bit generator seeded with the
user-supplied integer seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DivergenceError
from .geostat import as_xyz

DEFAULT_LAYER_DIMS = (2, 64, 64, 64, 64, 1)
DEFAULT_STENCIL_H = 1e-3


@dataclass
class MlpModel:
    layer_dims: tuple
    weights: list
    biases: list
    z_mean: float = 0.0
    z_std: float = 1.0

    method = "nn"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ConfigError("number of weight/bias arrays must equal len(layer_dims) - 1")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[k], self.layer_dims[k + 1]) or b.shape != (self.layer_dims[k + 1],):
                raise ConfigError(f"layer {k} parameter shapes inconsistent with layer_dims")
        if not self.z_std > 0:
            raise ConfigError("z_std > 0 violated")

    fitted = True

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.z_mean,
            self.z_std,
        )

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb])

    def predict(self, xy) -> np.ndarray:
        """Received power (dBm) at points ``xy`` of shape (m, 2)."""
        return self.z_mean + self.z_std * forward_std(self, xy)

    def parameters_dict(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "z_mean": self.z_mean,
            "z_std": self.z_std,
            "parameters": self.parameters_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        p = d["parameters"]
        return cls(
            tuple(d["layer_dims"]),
            [np.array(w, dtype=float).reshape(len(w), -1) for w in p["weights"]],
            [np.array(b, dtype=float) for b in p["biases"]],
            float(d["z_mean"]),
            float(d["z_std"]),
        )


@dataclass
class Gradients:
    weights: list
    biases: list

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb])

    def add_scaled(self, other: "Gradients", scale: float) -> "Gradients":
        return Gradients(
            [a + scale * b for a, b in zip(self.weights, other.weights)],
            [a + scale * b for a, b in zip(self.biases, other.biases)],
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 2000
    seed: int = 0
    layer_dims: tuple = DEFAULT_LAYER_DIMS
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_scale: float = 1.0
    lr_final_ratio: float = 1.0  # learning rate decays geometrically to this fraction at the last epoch

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate > 0 violated")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigError("epochs >= 1 violated")
        if not self.init_scale > 0:
            raise ConfigError("init_scale > 0 violated")
        if not 0 < self.lr_final_ratio <= 1:
            raise ConfigError("lr_final_ratio in (0, 1] violated")
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        _check_dims(self.layer_dims)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_dims"] = list(self.layer_dims)
        return d


def _check_dims(layer_dims) -> None:
    if len(layer_dims) < 2 or layer_dims[0] != 2 or layer_dims[-1] != 1 or min(layer_dims) < 1:
        raise ConfigError(f"layer_dims must start with 2 and end with 1, got {list(layer_dims)}")


def init_model(layer_dims=DEFAULT_LAYER_DIMS, seed: int = 0, init_scale: float = 1.0) -> MlpModel:
    """Draw weights and biases from U(-s, s) with s = init_scale / sqrt(fan_in)."""
    layer_dims = tuple(int(d) for d in layer_dims)
    _check_dims(layer_dims)
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = init_scale / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(layer_dims, weights, biases)


def forward_cache(model: MlpModel, xy: np.ndarray) -> list:
    """Layer activations [input, hidden_1, ..., output] for a batch of shape (m, 2)."""
    a = np.asarray(xy, dtype=float).reshape(-1, 2)
    acts = [a]
    last = model.n_layers - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if k < last:
            a = np.tanh(a)
        acts.append(a)
    return acts


def forward_std(model: MlpModel, xy) -> np.ndarray:
    return forward_cache(model, xy)[-1][:, 0]


def forward(model: MlpModel, x, y):
    """Received power in dBm at (x, y); scalars in, scalar out."""
    xy = np.column_stack([np.ravel(x), np.ravel(y)]).astype(float)
    z = model.z_mean + model.z_std * forward_std(model, xy)
    return float(z[0]) if np.ndim(x) == 0 and np.ndim(y) == 0 else z.reshape(np.shape(x))


def backprop(model: MlpModel, acts: list, grad_out: np.ndarray) -> Gradients:
    """Parameter gradients of sum_i grad_out[i] * u_i given cached activations."""
    delta = np.asarray(grad_out, dtype=float).reshape(-1, 1)
    gw = [None] * model.n_layers
    gb = [None] * model.n_layers
    for k in range(model.n_layers - 1, -1, -1):
        gw[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k].T) * (1.0 - acts[k] ** 2)
    return Gradients(gw, gb)


def standardize(model: MlpModel, z) -> np.ndarray:
    return (np.asarray(z, dtype=float) - model.z_mean) / model.z_std


def data_loss_and_gradients(model: MlpModel, samples) -> tuple[float, Gradients]:
    """Standardized-unit MSE over the batch and its exact parameter gradients."""
    s = as_xyz(samples)
    if len(s) == 0:
        raise ConfigError("gradient batch must be nonempty")
    acts = forward_cache(model, s[:, :2])
    r = acts[-1][:, 0] - standardize(model, s[:, 2])
    loss = float(np.mean(r * r))
    return loss, backprop(model, acts, 2.0 * r / len(s))


def param_gradients(model: MlpModel, samples) -> Gradients:
    """Gradient of the standardized data MSE with respect to every weight and bias."""
    return data_loss_and_gradients(model, samples)[1]


def stencil_points(xy: np.ndarray, h: float) -> np.ndarray:
    """Stack the 5-point stencil: centre, +x, -x, +y, -y (each block shaped like ``xy``)."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    return np.concatenate([xy, xy + ex, xy - ex, xy + ey, xy - ey])


def stencil_combine(u: np.ndarray, n: int, h: float) -> np.ndarray:
    c, px, mx, py, my = (u[k * n:(k + 1) * n] for k in range(5))
    return (px + mx + py + my - 4.0 * c) / (h * h)


def input_laplacian(model: MlpModel, x, y, h: float = DEFAULT_STENCIL_H):
    """Five-point finite-difference Laplacian of the standardized output u."""
    if not h > 0:
        raise ConfigError("stencil step h > 0 violated")
    xy = np.column_stack([np.ravel(x), np.ravel(y)]).astype(float)
    lap = stencil_combine(forward_std(model, stencil_points(xy, h)), len(xy), h)
    return float(lap[0]) if np.ndim(x) == 0 and np.ndim(y) == 0 else lap.reshape(np.shape(x))


class Adam:
    """Bias-corrected adaptive-moment optimizer over (weights, biases)."""

    def __init__(self, model: MlpModel, config: TrainConfig):
        self.config = config
        self.t = 0
        self.m = Gradients([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])
        self.v = Gradients([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])

    def learning_rate(self, t: int) -> float:
        c = self.config
        if c.lr_final_ratio == 1.0 or c.epochs == 1:
            return c.learning_rate
        return c.learning_rate * c.lr_final_ratio ** ((t - 1) / (c.epochs - 1))

    def step(self, model: MlpModel, grads: Gradients) -> None:
        c = self.config
        self.t += 1
        lr = self.learning_rate(self.t)
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for params, g_list, m_list, v_list in (
            (model.weights, grads.weights, self.m.weights, self.v.weights),
            (model.biases, grads.biases, self.m.biases, self.v.biases),
        ):
            for p, g, m, v in zip(params, g_list, m_list, v_list):
                m *= c.beta1
                m += (1.0 - c.beta1) * g
                v *= c.beta2
                v += (1.0 - c.beta2) * g * g
                p -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


@dataclass
class TrainResult:
    model: MlpModel
    data_loss: list = field(default_factory=list)
    pde_loss: list = field(default_factory=list)
    total_loss: list = field(default_factory=list)
    final_data_loss: float = float("nan")
    final_pde_loss: Optional[float] = None

    @property
    def loss(self) -> list:
        return self.total_loss

    def best_so_far(self) -> list:
        return list(np.minimum.accumulate(self.total_loss))


# (model) -> (pde loss, gradients); used by the physics-informed trainer
PdeTerm = Callable[[MlpModel], tuple]


def fit_standardization(z: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(z))
    std = float(np.std(z))
    return mean, (std if std > 0 else 1.0)


def train(samples, config: TrainConfig, pde_term: Optional[PdeTerm] = None, lambda_pde: float = 0.0) -> TrainResult:
    """Full-batch Adam on data MSE plus an optional weighted PDE penalty.

    Losses recorded at epoch ``e`` are those of the parameters before the
    ``e``-th update. With ``lambda_pde == 0`` the PDE term is evaluated for
    the trace only and never touches the gradients.
    """
    s = as_xyz(samples)
    if len(s) < 1:
        raise ConfigError("training needs at least 1 sample")
    model = init_model(config.layer_dims, config.seed, config.init_scale)
    model.z_mean, model.z_std = fit_standardization(s[:, 2])
    # overflow shows up as a non-finite loss below, which is reported as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        return _train_loop(model, s, config, pde_term, lambda_pde)


def _train_loop(model, s, config, pde_term, lambda_pde) -> TrainResult:
    opt = Adam(model, config)
    result = TrainResult(model)
    for epoch in range(int(config.epochs)):
        loss, grads = data_loss_and_gradients(model, s)
        total = loss
        if pde_term is not None:
            pde, pde_grads = pde_term(model)
            result.pde_loss.append(pde)
            if lambda_pde != 0.0:
                total = loss + lambda_pde * pde
                grads = grads.add_scaled(pde_grads, lambda_pde)
        if not np.isfinite(total):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        result.data_loss.append(loss)
        result.total_loss.append(total)
        opt.step(model, grads)
    result.final_data_loss, _ = data_loss_and_gradients(model, s)
    if pde_term is not None:
        result.final_pde_loss = pde_term(model)[0]
    if not np.isfinite(result.final_data_loss):
        raise DivergenceError(f"non-finite loss at epoch {config.epochs}", epoch=int(config.epochs))
    return result


def train_mlp(samples, config: TrainConfig) -> TrainResult:
    """Plain data-fit baseline."""
    return train(samples, config)
