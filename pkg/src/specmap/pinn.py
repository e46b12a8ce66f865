"""Physics-informed training with a Laplace-equation residual penalty.

The total loss is ``L = L_data + lambda_pde * L_pde`` where ``L_pde`` is the
mean squared five-point Laplacian of the standardized network output over a
fixed set of collocation points in the normalized domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .neural import (
    DEFAULT_STENCIL_H,
    MlpModel,
    TrainConfig,
    TrainResult,
    backprop,
    forward_cache,
    stencil_combine,
    stencil_points,
    train,
)

_STENCIL_COEFFS = np.array([-4.0, 1.0, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class PinnConfig:
    base: TrainConfig = field(default_factory=TrainConfig)
    lambda_pde: float = 1.0
    n_collocation: int = 1024
    collocation_seed: int = 0
    stencil_h: float = DEFAULT_STENCIL_H
    domain: tuple = (-1.0, 1.0, -1.0, 1.0)  # x_min, x_max, y_min, y_max
    resample_each_epoch: bool = False

    def __post_init__(self):
        if not self.lambda_pde >= 0:
            raise ConfigError("lambda_pde >= 0 violated")
        if self.n_collocation < 1:
            raise ConfigError("n_collocation >= 1 violated")
        if not self.stencil_h > 0:
            raise ConfigError("stencil_h > 0 violated")
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("collocation domain must be a nondegenerate box")

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "lambda_pde": self.lambda_pde,
            "n_collocation": self.n_collocation,
            "collocation_seed": self.collocation_seed,
            "stencil_h": self.stencil_h,
            "domain": list(self.domain),
            "resample_each_epoch": self.resample_each_epoch,
        }


def sample_collocation(config: PinnConfig, rng=None) -> np.ndarray:
    """Uniform points over the domain box, shape (n_collocation, 2)."""
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.collocation_seed))
    x0, x1, y0, y1 = config.domain
    u = rng.random((config.n_collocation, 2))
    return np.column_stack([x0 + (x1 - x0) * u[:, 0], y0 + (y1 - y0) * u[:, 1]])


def pde_loss_and_gradients(model: MlpModel, points: np.ndarray, h: float):
    """Mean squared stencil Laplacian and its parameter gradients.

    All five stencil evaluations go through one batched forward pass; the
    residual is linear in those outputs, so one backward pass suffices.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ConfigError("collocation point set must be nonempty")
    acts = forward_cache(model, stencil_points(pts, h))
    lap = stencil_combine(acts[-1][:, 0], n, h)
    loss = float(np.mean(lap * lap))
    # d loss / d u at each stencil node
    upstream = np.concatenate([c * (2.0 * lap / n) / (h * h) for c in _STENCIL_COEFFS])
    return loss, backprop(model, acts, upstream)


def pde_loss(model: MlpModel, points, stencil_h: float = DEFAULT_STENCIL_H) -> float:
    return pde_loss_and_gradients(model, points, stencil_h)[0]


def train_pinn(samples, config: PinnConfig) -> TrainResult:
    """Train on data MSE plus ``lambda_pde`` times the Laplace residual.

    The returned traces hold per-epoch data, PDE and total losses. With
    ``lambda_pde == 0`` the parameters match :func:`specmap.neural.train_mlp`
    bit for bit under the same base config.
    """
    if config.resample_each_epoch:
        rng = np.random.Generator(np.random.PCG64(config.collocation_seed))

        def term(model):
            return pde_loss_and_gradients(model, sample_collocation(config, rng), config.stencil_h)
    else:
        points = sample_collocation(config)

        def term(model):
            return pde_loss_and_gradients(model, points, config.stencil_h)

    return train(samples, config.base, pde_term=term, lambda_pde=config.lambda_pde)
