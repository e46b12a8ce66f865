"""Synthetic harmonic-field benchmark for the kriging / NN / PINN comparison.

The field ``z = 10 (x^2 - y^2)`` satisfies Laplace's equation exactly, so a
Laplace-regularised network has the right inductive bias. Training samples
are uniform over [-1, 1]^2 with Gaussian noise; the held-out set is a
separate uniform draw scored against the noiseless field. Uniform sampling
stands in for hand-picked terrain locations, which cannot be reproduced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geostat import KrigingModel
from .neural import TrainConfig, train_mlp
from .pinn import PinnConfig, train_pinn
from .rem import comparison_report, test_mse

# Budget shared by NN and PINN in the head-to-head comparison.
BENCH_TRAIN = dict(learning_rate=3e-3, epochs=4000, lr_final_ratio=0.01)
BENCH_LAMBDA_PDE = 30.0
BENCH_COLLOCATION = 128


def harmonic_field(x, y, amplitude: float = 10.0):
    return amplitude * (np.asarray(x) ** 2 - np.asarray(y) ** 2)


def harmonic_samples(n: int, seed: int, noise_std: float = 0.1, amplitude: float = 10.0) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    xy = rng.uniform(-1.0, 1.0, size=(n, 2))
    z = harmonic_field(xy[:, 0], xy[:, 1], amplitude) + noise_std * rng.standard_normal(n)
    return np.column_stack([xy, z])


def harmonic_test_set(n: int = 2000, seed: int = 10_000, amplitude: float = 10.0) -> np.ndarray:
    return harmonic_samples(n, seed, noise_std=0.0, amplitude=amplitude)


@dataclass
class BenchmarkRun:
    seed: int
    mse: dict
    pde_initial: float
    pde_final: float
    results: dict = field(default_factory=dict, repr=False)


def bench_configs(seed: int, **overrides) -> tuple[TrainConfig, PinnConfig]:
    train_kw = {**BENCH_TRAIN, **{k: v for k, v in overrides.items() if k in TrainConfig.__dataclass_fields__}}
    base = TrainConfig(seed=seed, **train_kw)
    pinn = PinnConfig(
        base=base,
        lambda_pde=overrides.get("lambda_pde", BENCH_LAMBDA_PDE),
        n_collocation=overrides.get("n_collocation", BENCH_COLLOCATION),
        collocation_seed=seed,
    )
    return base, pinn


def run_harmonic(seed: int, n_train: int = 64, noise_std: float = 0.1, methods=("kriging", "nn", "pinn"),
                 test=None, **overrides) -> BenchmarkRun:
    """Fit the requested methods on one seeded training draw and score them."""
    train = harmonic_samples(n_train, seed, noise_std)
    test = harmonic_test_set() if test is None else test
    base, pinn_cfg = bench_configs(seed, **overrides)
    mse, results = {}, {}
    pde0 = pdef = float("nan")
    if "kriging" in methods:
        km = KrigingModel().fit(train)
        results["kriging"] = km
        mse["kriging"] = test_mse(km, test)
    if "nn" in methods:
        r = train_mlp(train, base)
        results["nn"] = r
        mse["nn"] = test_mse(r.model, test)
    if "pinn" in methods:
        r = train_pinn(train, pinn_cfg)
        results["pinn"] = r
        mse["pinn"] = test_mse(r.model, test)
        pde0, pdef = r.pde_loss[0], r.final_pde_loss
    return BenchmarkRun(seed, mse, pde0, pdef, results)


def summarize(runs: list) -> dict:
    """Median-over-seeds MSE per method plus the per-seed table."""
    methods = list(runs[0].mse)
    med = {m: float(np.median([r.mse[m].mse_dbm2 for r in runs])) for m in methods}
    return {
        "median_mse_dbm2": med,
        "seeds": [
            {
                "seed": r.seed,
                "comparison": comparison_report(r.mse),
                "pde_initial": r.pde_initial,
                "pde_final": r.pde_final,
            }
            for r in runs
        ],
    }
