"""Radio environment map rasterisation and cross-model error evaluation.

Any object with a ``predict(xy) -> z`` method (xy of shape (m, 2), z in dBm)
is a surrogate. Objects exposing ``fitted = False`` are rejected.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, InsufficientDataError, SurrogateStateError
from .geostat import as_xyz

# fixed column order for side-by-side reports
COMPARISON_ORDER = ("kriging", "nn", "pinn")


@dataclass(frozen=True)
class MapGrid:
    bbox: tuple = (-1.0, 1.0, -1.0, 1.0)  # x_min, x_max, y_min, y_max
    nx: int = 64
    ny: int = 64

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("map grid needs nx, ny >= 2")
        x0, x1, y0, y1 = self.bbox
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("map bbox must be nondegenerate")

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x0, x1, y0, y1 = self.bbox
        xs = x0 + (np.arange(self.nx) + 0.5) * (x1 - x0) / self.nx
        ys = y0 + (np.arange(self.ny) + 0.5) * (y1 - y0) / self.ny
        return xs, ys

    def refined(self, factor: int = 2) -> "MapGrid":
        return MapGrid(self.bbox, self.nx * factor, self.ny * factor)


@dataclass
class Rem:
    grid: MapGrid
    values: np.ndarray  # (ny, nx); row 0 = minimum y
    model_tag: str

    def __post_init__(self):
        if self.values.shape != (self.grid.ny, self.grid.nx):
            raise ConfigError("REM values must have shape (ny, nx)")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("REM values must be finite")

    def to_csv(self) -> str:
        buf = io.StringIO()
        for row in self.values:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "bbox": list(self.grid.bbox),
            "nx": self.grid.nx,
            "ny": self.grid.ny,
            "model_tag": self.model_tag,
            "units": "dBm",
            "orientation": (
                "row j holds cell centres at y = y_min + (j + 0.5) * (y_max - y_min) / ny, "
                "row 0 = minimum y; column i holds x = x_min + (i + 0.5) * (x_max - x_min) / nx"
            ),
        }

    @classmethod
    def from_files(cls, csv_text: str, sidecar: dict) -> "Rem":
        values = np.array([[float(v) for v in line.split(",")] for line in csv_text.splitlines() if line.strip()])
        grid = MapGrid(tuple(sidecar["bbox"]), int(sidecar["nx"]), int(sidecar["ny"]))
        return cls(grid, values, sidecar["model_tag"])


class ConstantSurrogate:
    """Predicts the same value everywhere."""

    method = "constant"
    fitted = True

    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, xy) -> np.ndarray:
        return np.full(len(np.atleast_2d(xy)), self.value)


class LookupSurrogate:
    """Exact table lookup at known coordinates; the truth oracle for held-out sets."""

    method = "lookup"
    fitted = True

    def __init__(self, samples):
        s = as_xyz(samples)
        self.samples = s
        self._table = {(float(x), float(y)): float(z) for x, y, z in s}

    def predict(self, xy) -> np.ndarray:
        out = []
        for x, y in np.atleast_2d(np.asarray(xy, dtype=float)):
            key = (float(x), float(y))
            if key not in self._table:
                raise ConfigError(f"lookup surrogate has no value at {key}")
            out.append(self._table[key])
        return np.array(out)


def _check_fitted(surrogate) -> None:
    if not getattr(surrogate, "fitted", True):
        raise SurrogateStateError(f"surrogate {type(surrogate).__name__} has not been fitted")


def surrogate_tag(surrogate) -> str:
    return getattr(surrogate, "tag", None) or getattr(surrogate, "method", type(surrogate).__name__)


def predict_map(surrogate, grid: MapGrid, model_tag: Optional[str] = None) -> Rem:
    """Evaluate the surrogate at every cell centre; ``values[j, i]`` is at (x_i, y_j)."""
    _check_fitted(surrogate)
    xs, ys = grid.cell_centers()
    gx, gy = np.meshgrid(xs, ys)
    z = np.asarray(surrogate.predict(np.column_stack([gx.ravel(), gy.ravel()])), dtype=float)
    return Rem(grid, z.reshape(grid.ny, grid.nx), model_tag or surrogate_tag(surrogate))


@dataclass(frozen=True)
class MseReport:
    mse_dbm2: float
    mse_standardized: float
    n: int
    z_std: float

    def to_dict(self) -> dict:
        return {
            "mse_dbm2": self.mse_dbm2,
            "mse_standardized": self.mse_standardized,
            "n": self.n,
            "z_std": self.z_std,
        }


def test_mse(surrogate, held_out) -> MseReport:
    """Mean squared prediction error in dBm^2, plus the same error in standardized units.

    Standardized units divide by the square of the surrogate's ``z_std``
    (its training-target standard deviation) when it has one, else by the
    held-out target variance.
    """
    _check_fitted(surrogate)
    s = as_xyz(held_out)
    if len(s) == 0:
        raise InsufficientDataError("test_mse needs a nonempty held-out set")
    r = np.asarray(surrogate.predict(s[:, :2]), dtype=float) - s[:, 2]
    mse = float(np.mean(r * r))
    z_std = getattr(surrogate, "z_std", None)
    if z_std is None:
        z_std = float(np.std(s[:, 2])) or 1.0
    return MseReport(mse, mse / (z_std * z_std), len(s), float(z_std))


test_mse.__test__ = False  # not a pytest test despite the name


def comparison_report(results: dict) -> dict:
    """Side-by-side MSE report, methods listed kriging, nn, pinn first."""
    ordered = [m for m in COMPARISON_ORDER if m in results] + sorted(m for m in results if m not in COMPARISON_ORDER)
    return {
        "order": ordered,
        "methods": {m: results[m].to_dict() for m in ordered},
    }


def render_comparison(report: dict) -> str:
    lines = [f"{'method':<10}{'MSE [dBm^2]':>16}{'MSE [std]':>16}"]
    for m in report["order"]:
        r = report["methods"][m]
        lines.append(f"{m:<10}{r['mse_dbm2']:>16.6g}{r['mse_standardized']:>16.6g}")
    return "\n".join(lines)

