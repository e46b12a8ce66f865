"""Ordinary kriging: empirical variogram, parametric fit, prediction.

Variogram models use ``range_len`` as a scale parameter (not the practical
range)::

    exponential  g(h) = nugget + sill * (1 - exp(-h / r))
    gaussian     g(h) = nugget + sill * (1 - exp(-(h / r)^2))
    spherical    g(h) = nugget + sill * (1.5 h/r - 0.5 (h/r)^3),  h < r
                        nugget + sill,                            h >= r

In the kriging system the semivariance of a point with itself is 0, so the
nugget acts as a discontinuity at the origin and kriging stays an exact
interpolator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DegenerateError, InsufficientDataError, SurrogateStateError

KINDS = ("exponential", "spherical", "gaussian")


def as_xyz(samples) -> np.ndarray:
    """Coerce samples to a float (n, 3) array of [x, y, z] rows."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ConfigError(f"samples must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError("samples must be finite")
    return arr


@dataclass(frozen=True)
class VariogramModel:
    kind: str
    nugget: float
    sill: float
    range_len: float
    objective: float = float("nan")

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown variogram kind {self.kind!r}; expected one of {KINDS}")
        if self.nugget < 0 or not self.sill > 0 or not self.range_len > 0:
            raise ConfigError("variogram requires nugget >= 0, sill > 0, range_len > 0")

    def __call__(self, h):
        h = np.asarray(h, dtype=float)
        return self.nugget + self.sill * _shape(self.kind, h / self.range_len)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "nugget": self.nugget,
            "sill": self.sill,
            "range_len": self.range_len,
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VariogramModel":
        return cls(d["kind"], float(d["nugget"]), float(d["sill"]), float(d["range_len"]),
                   float(d.get("objective", float("nan"))))


def _shape(kind: str, u: np.ndarray) -> np.ndarray:
    if kind == "exponential":
        return 1.0 - np.exp(-u)
    if kind == "gaussian":
        return 1.0 - np.exp(-(u * u))
    uc = np.minimum(u, 1.0)
    return 1.5 * uc - 0.5 * uc**3


@dataclass(frozen=True)
class EmpiricalVariogram:
    bin_centers: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray
    max_lag: float

    def nonempty(self):
        keep = self.counts > 0
        return self.bin_centers[keep], self.gamma[keep], self.counts[keep]


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(d * d, axis=-1))


def default_max_lag(xy: np.ndarray) -> float:
    """Half the largest pairwise distance."""
    return 0.5 * float(pairwise_distances(xy, xy).max())


def empirical_variogram(samples, n_bins: int = 12, max_lag: Optional[float] = None) -> EmpiricalVariogram:
    """Classical (Matheron) semivariance estimate in equal-width lag bins over (0, max_lag].

    Pairs with lag 0 or lag beyond ``max_lag`` are not binned. Bin centres are
    the geometric bin midpoints.
    """
    s = as_xyz(samples)
    if len(s) < 2:
        raise InsufficientDataError("empirical variogram needs at least 2 samples")
    if n_bins < 1:
        raise ConfigError("n_bins >= 1 violated")
    if max_lag is None:
        max_lag = default_max_lag(s[:, :2])
    if not max_lag > 0:
        raise ConfigError("max_lag > 0 violated")
    i, j = np.triu_indices(len(s), k=1)
    lag = np.hypot(s[i, 0] - s[j, 0], s[i, 1] - s[j, 1])
    sq = (s[i, 2] - s[j, 2]) ** 2
    width = max_lag / n_bins
    b = np.ceil(lag / width).astype(int) - 1  # bin b covers (b*w, (b+1)*w]
    keep = (lag > 0) & (b < n_bins)
    counts = np.bincount(b[keep], minlength=n_bins)
    sums = np.bincount(b[keep], weights=sq[keep], minlength=n_bins)
    gamma = np.zeros(n_bins)
    nz = counts > 0
    gamma[nz] = sums[nz] / (2.0 * counts[nz])
    centers = (np.arange(n_bins) + 0.5) * width
    return EmpiricalVariogram(centers, gamma, counts, float(max_lag))


def _objective(kind, params, h, g, w):
    nugget, sill, rng = params
    model = nugget + sill * _shape(kind, h / rng)
    r = model - g
    return float(np.sum(w * r * r))


def fit_variogram(ev: EmpiricalVariogram, kind: str = "exponential",
                  grid_size: int = 16, refine_steps: int = 100) -> VariogramModel:
    """Count-weighted least-squares fit of a variogram model.

    A ``grid_size``^3 search over (nugget, sill, range) is followed by
    ``refine_steps`` rounds of coordinate descent. Nugget candidates are 0
    plus log-spaced values up to the largest semivariance; sill and range are
    log-spaced over [1e-3, 2] x (max semivariance, max lag). In each descent
    round nugget and sill (which enter linearly) are set to their exact
    coordinate-wise minimisers, then range takes a multiplicative step in
    whichever direction improves; the range step doubles on success and
    halves otherwise.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown variogram kind {kind!r}")
    h, g, w = ev.nonempty()
    if len(h) < 3:
        raise InsufficientDataError(f"variogram fit needs >= 3 nonempty bins, got {len(h)}")
    w = w.astype(float)
    gmax = max(float(g.max()), 1e-12)
    hmax = float(ev.max_lag)

    nuggets = np.concatenate([[0.0], np.logspace(-3, 0, grid_size - 1) * gmax])
    sills = np.logspace(-3, np.log10(2.0), grid_size) * gmax
    ranges = np.logspace(-3, np.log10(2.0), grid_size) * hmax
    best, best_val = None, np.inf
    for n0 in nuggets:
        for s0 in sills:
            # vectorised over range candidates
            model = n0 + s0 * _shape(kind, h[None, :] / ranges[:, None])
            vals = np.sum(w * (model - g) ** 2, axis=1)
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val, best = float(vals[k]), [float(n0), float(s0), float(ranges[k])]

    nugget, sill, rng = best
    step = 0.5  # log-multiplicative range step
    for _ in range(refine_steps):
        # nugget and sill enter linearly: exact 1-D minimisers along those axes
        f = _shape(kind, h / rng)
        nugget = max(0.0, float(np.sum(w * (g - sill * f)) / np.sum(w)))
        denom = float(np.sum(w * f * f))
        if denom > 0:
            sill = max(float(np.sum(w * f * (g - nugget)) / denom), 1e-12 * gmax)
        best_val = _objective(kind, (nugget, sill, rng), h, g, w)
        for sign in (1.0, -1.0):
            trial = rng * np.exp(sign * step)
            val = _objective(kind, (nugget, sill, trial), h, g, w)
            if val < best_val:
                rng, best_val = float(trial), val
                step *= 2.0
                break
        else:
            step *= 0.5
    best = [nugget, sill, rng]
    return VariogramModel(kind, float(best[0]), float(best[1]), float(best[2]), float(best_val))


def _semivariance_matrix(model: VariogramModel, d: np.ndarray) -> np.ndarray:
    g = model(d)
    return np.where(d == 0.0, 0.0, g)


def _dedupe(s: np.ndarray, model: VariogramModel) -> np.ndarray:
    """Average co-located samples when the nugget makes that legal, else raise."""
    _, inverse, counts = np.unique(s[:, :2], axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.all(counts == 1):
        return s
    if model.nugget == 0.0:
        dup = int(np.flatnonzero(counts > 1)[0])
        idx = [int(k) for k in np.flatnonzero(inverse == dup)]
        raise DegenerateError(
            f"singular kriging system: samples {idx} share a location and the nugget is 0",
            indices=idx,
        )
    out = []
    seen = set()
    for i in range(len(s)):
        g = inverse[i]
        if g in seen:
            continue
        seen.add(g)
        members = s[inverse == g]
        out.append([members[0, 0], members[0, 1], members[:, 2].mean()])
    return np.array(out)


@dataclass
class KrigingSystem:
    """Factor-once ordinary kriging system for repeated queries."""

    samples: np.ndarray
    model: VariogramModel
    lhs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = _dedupe(as_xyz(self.samples), self.model)
        if len(s) < 1:
            raise InsufficientDataError("kriging needs at least 1 sample")
        self.samples = s
        n = len(s)
        a = np.ones((n + 1, n + 1))
        a[:n, :n] = _semivariance_matrix(self.model, pairwise_distances(s[:, :2], s[:, :2]))
        a[n, n] = 0.0
        self.lhs = a

    def weights(self, query) -> tuple[np.ndarray, np.ndarray]:
        """Kriging weights (m, n) and Lagrange multipliers (m,) for query points (m, 2)."""
        q = np.atleast_2d(np.asarray(query, dtype=float))
        n = len(self.samples)
        d = pairwise_distances(self.samples[:, :2], q)
        rhs = np.ones((n + 1, len(q)))
        rhs[:n] = _semivariance_matrix(self.model, d)
        try:
            sol = np.linalg.solve(self.lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise DegenerateError(f"singular kriging system: {exc}") from None
        # A query on a sample location has that sample's column as its right-hand
        # side, so the exact solution is a unit weight and zero multiplier. Use it
        # directly: ill-conditioned systems (gaussian, no nugget) lose ~1e-3 there.
        hit_sample, hit_query = np.nonzero(d == 0.0)
        sol[:, hit_query] = 0.0
        sol[hit_sample, hit_query] = 1.0
        return sol[:n].T, sol[n]

    def predict(self, query) -> tuple[np.ndarray, np.ndarray]:
        """Predictions and kriging variances (floored at 0) for query points (m, 2)."""
        q = np.atleast_2d(np.asarray(query, dtype=float))
        w, mu = self.weights(q)
        pred = w @ self.samples[:, 2]
        g0 = _semivariance_matrix(self.model, pairwise_distances(q, self.samples[:, :2]))
        var = np.sum(w * g0, axis=1) + mu
        return pred, np.maximum(var, 0.0)


def krige(samples, model: VariogramModel, query) -> tuple[float, float]:
    """Ordinary kriging prediction and variance at a single (x, y) query."""
    pred, var = KrigingSystem(samples, model).predict(np.asarray(query, dtype=float).reshape(1, 2))
    return float(pred[0]), float(var[0])


class KrigingModel:
    """Surrogate wrapper: fit a variogram to samples, then predict by kriging."""

    method = "kriging"

    def __init__(self, kind: str = "exponential", n_bins: int = 12, max_lag: Optional[float] = None):
        self.kind = kind
        self.n_bins = n_bins
        self.max_lag = max_lag
        self.variogram: Optional[VariogramModel] = None
        self._system: Optional[KrigingSystem] = None
        self.z_mean = 0.0
        self.z_std = 1.0

    @property
    def fitted(self) -> bool:
        return self._system is not None

    def fit(self, samples) -> "KrigingModel":
        s = as_xyz(samples)
        ev = empirical_variogram(s, self.n_bins, self.max_lag)
        self.max_lag = ev.max_lag
        return self.set_model(s, fit_variogram(ev, self.kind))

    def set_model(self, samples, variogram: VariogramModel) -> "KrigingModel":
        s = as_xyz(samples)
        self.kind = variogram.kind
        self.variogram = variogram
        self._system = KrigingSystem(s, variogram)
        self.z_mean = float(s[:, 2].mean())
        std = float(s[:, 2].std())
        self.z_std = std if std > 0 else 1.0
        return self

    @property
    def samples(self) -> np.ndarray:
        if self._system is None:
            raise SurrogateStateError("kriging model has not been fitted")
        return self._system.samples

    def predict(self, xy) -> np.ndarray:
        if self._system is None:
            raise SurrogateStateError("kriging model has not been fitted")
        pred, _ = self._system.predict(xy)
        return pred

    def predict_with_variance(self, xy):
        if self._system is None:
            raise SurrogateStateError("kriging model has not been fitted")
        return self._system.predict(xy)
