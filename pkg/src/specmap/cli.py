"""Command-line entry point.

Every subcommand reads a flat JSON config (``--config``), applies
``--set key=value`` overrides and explicit flags, rejects unknown keys and
writes ``config_echo.json`` next to its outputs. Wall-clock timings go to
``run.log`` only, so all other artifacts are byte-identical across reruns.

Exit codes: 0 success, 2 validation/config error, 3 insufficient data,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .allocation import (
    MODES,
    AllocationConfig,
    AllocationRequest,
    PathLossModel,
    TransmitterSpec,
    allocate,
)
from .artifacts import checkpoint, dumps, format_samples, load_checkpoint, parse_samples
from .benchmark import BENCH_COLLOCATION, BENCH_LAMBDA_PDE, BENCH_TRAIN, harmonic_samples, harmonic_test_set
from .errors import ConfigError, InsufficientDataError, NumericError, SpecmapError, ValidationError
from .geostat import KrigingModel
from .ingest import ChannelGrid, format_measurements, Measurement, read_measurements
from .neural import DEFAULT_LAYER_DIMS, DEFAULT_STENCIL_H, TrainConfig, train_mlp
from .occupancy import (
    OCCUPANCY_DEFINITION,
    AvailabilityMatrix,
    OccupancyConfig,
    band_summary,
    joint_availability,
    single_site_availability,
    split_sites,
)
from .pinn import PinnConfig, train_pinn
from .rem import MapGrid, comparison_report, predict_map, render_comparison, test_mse

SEED_ENV = "SPECMAP_SEED"

EXIT_OK, EXIT_CONFIG, EXIT_NO_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_GRID_KEYS = {"start_mhz": 470.0, "channel_width_mhz": 6.0, "n_channels": 23}
_TRAIN_KEYS = {
    "learning_rate": 1e-3,
    "epochs": 2000,
    "seed": 0,
    "layer_dims": list(DEFAULT_LAYER_DIMS),
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "init_scale": 1.0,
    "lr_final_ratio": 1.0,
}

DEFAULTS = {
    "occupancy": {
        "input": None,
        "input_b": None,
        "out": None,
        "site_a": None,
        "site_b": None,
        "band_name": "TVWS",
        "threshold_dbm": -108.0,
        "slot_s": 1.0,
        "window_s": 900.0,
        "start_s": None,
        **_GRID_KEYS,
    },
    "fit": {
        "method": None,
        "input": None,
        "test": None,
        "out": None,
        "kind": "exponential",
        "n_bins": 12,
        "max_lag": None,
        **_TRAIN_KEYS,
        "lambda_pde": 1.0,
        "n_collocation": 1024,
        "collocation_seed": 0,
        "stencil_h": DEFAULT_STENCIL_H,
        "resample_each_epoch": False,
    },
    "map": {"model": None, "out": None, "nx": 64, "ny": 64, "bbox": [-1.0, 1.0, -1.0, 1.0]},
    "eval": {"model": None, "test": None, "out": None},
    "allocate": {
        "requests": None,
        "availability": None,
        "out": None,
        "mode": "sensing_dynamic",
        "database_channels": None,
        "path_loss": "free_space",
        "exponent": 2.0,
        "d0_km": 1.0,
        "pl0_db": 88.0,
        "database_eirp_cap_dbm": 16.0,
        "sensing_eirp_cap_dbm": 42.0,
        "su_interference_threshold_dbm": -118.0,
        "pu_interference_threshold_dbm": -118.0,
        "min_eirp_dbm": 0.0,
        "km_per_unit": 1.0,
        **_GRID_KEYS,
    },
    "synth": {
        "kind": "harmonic",
        "out": None,
        "seed": 0,
        "n_train": 64,
        "n_test": 2000,
        "noise_std": 0.1,
        "n_slots": 900,
        **_GRID_KEYS,
    },
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(command: str, config_path, overrides, flags: dict) -> dict:
    """Merge defaults, config file, ``--set`` overrides and flags; reject unknown keys."""
    cfg = dict(DEFAULTS[command])
    layers = []
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {config_path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a flat JSON object")
        layers.append(doc)
    sets = {}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        sets[k.strip()] = _parse_value(v)
    layers.append(sets)
    layers.append({k: v for k, v in flags.items() if v is not None})
    for layer in layers:
        unknown = sorted(set(layer) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys for {command!r}: {', '.join(unknown)}")
        for k, v in layer.items():
            if isinstance(v, dict):
                raise ConfigError(f"config key {k!r}: nested values are not allowed (flat document)")
            cfg[k] = v
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None and "seed" in cfg:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
        cfg["seed_override_env"] = {SEED_ENV: int(env_seed)}
    return cfg


def _require(cfg: dict, *keys):
    for k in keys:
        if cfg.get(k) in (None, [], ""):
            raise ConfigError(f"missing required setting {k!r}")


def _read_text(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise ValidationError(f"input file not found: {path}") from None
    except IsADirectoryError:
        raise ValidationError(f"input path is a directory: {path}") from None


def _load_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None


class Outputs:
    """Writes artifacts into the output directory and keeps the run log."""

    def __init__(self, out_dir, command: str):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.written = []
        self._t0 = time.perf_counter()
        self._log = []

    def text(self, name: str, content: str) -> Path:
        p = self.dir / name
        p.write_text(content, encoding="utf-8")
        self.written.append(name)
        return p

    def json(self, name: str, obj) -> Path:
        return self.text(name, dumps(obj))

    def log(self, message: str) -> None:
        self._log.append(f"{_dt.datetime.now(_dt.timezone.utc).isoformat()} {message}")

    def close(self, status: str) -> None:
        self.log(f"{self.command} {status} wall_clock_s={time.perf_counter() - self._t0:.3f}")
        with open(self.dir / "run.log", "a", encoding="utf-8") as fh:
            fh.write("\n".join(self._log) + "\n")


def _grid(cfg) -> ChannelGrid:
    return ChannelGrid(float(cfg["start_mhz"]), float(cfg["channel_width_mhz"]), int(cfg["n_channels"]))


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(**{k: cfg[k] for k in _TRAIN_KEYS})


# -- subcommands ------------------------------------------------------------


def cmd_occupancy(cfg: dict, out: Outputs) -> int:
    _require(cfg, "input")
    grid = _grid(cfg)
    occ = OccupancyConfig(float(cfg["threshold_dbm"]), float(cfg["slot_s"]), float(cfg["window_s"]),
                          None if cfg["start_s"] is None else float(cfg["start_s"]))
    records = read_measurements(cfg["input"])
    if cfg["input_b"]:
        sites = {"A": records, "B": read_measurements(cfg["input_b"])}
        names = ["A", "B"]
    else:
        sites = split_sites(records)
        if cfg["site_a"]:
            names = [cfg["site_a"]] + ([cfg["site_b"]] if cfg["site_b"] else [])
            missing = [n for n in names if n not in sites]
            if missing:
                raise ValidationError(f"site ids not present in input: {missing}")
        else:
            names = sorted(sites)
            if len(names) > 2:
                raise ConfigError(f"input holds {len(names)} sites; choose two with site_a / site_b")
    summaries = {n: band_summary(sites[n], grid, occ, cfg["band_name"]) for n in names}
    if not summaries or all(s.no_data for s in summaries.values()):
        raise InsufficientDataError("no data: no usable slots in the analysis window")
    if len(names) == 2:
        matrix = joint_availability(sites[names[0]], sites[names[1]], grid, occ)
        matrix.coverage_gaps = {names[0]: matrix.coverage_gaps["site_a"], names[1]: matrix.coverage_gaps["site_b"]}
    else:
        matrix = single_site_availability(sites[names[0]], grid, occ)
        matrix.coverage_gaps = {names[0]: matrix.coverage_gaps["site"]}
    report = {
        "definition": OCCUPANCY_DEFINITION,
        "threshold_dbm": occ.threshold_dbm,
        "slot_s": occ.slot_s,
        "window_s": occ.window_s,
        "sites": {n: summaries[n].to_dict() for n in names},
        "table": [summaries[n].render() for n in names],
        "coverage_gaps": matrix.coverage_gaps,
    }
    out.json("occupancy_report.json", report)
    out.text("availability.csv", matrix.to_csv())
    out.json("availability.json", matrix.sidecar())
    return EXIT_OK


def _read_samples(path):
    samples, frame = parse_samples(_read_text(path))
    return samples, frame


def cmd_fit(cfg: dict, out: Outputs) -> int:
    _require(cfg, "method", "input")
    method = cfg["method"]
    if method not in ("kriging", "nn", "pinn"):
        raise ConfigError(f"method must be kriging, nn or pinn, got {method!r}")
    samples, frame = _read_samples(cfg["input"])
    if len(samples) == 0:
        raise InsufficientDataError(f"no samples in {cfg['input']}")
    report = {"method": method, "n_samples": int(len(samples))}
    if method == "kriging":
        model = KrigingModel(cfg["kind"], int(cfg["n_bins"]), cfg["max_lag"]).fit(samples)
        report["variogram"] = model.variogram.to_dict()
        doc = checkpoint(model, method, frame=None if frame is None else frame.to_dict())
        surrogate = model
    else:
        base = _train_config(cfg)
        if method == "nn":
            result = train_mlp(samples, base)
            report["train_config"] = base.to_dict()
        else:
            pcfg = PinnConfig(base, float(cfg["lambda_pde"]), int(cfg["n_collocation"]), int(cfg["collocation_seed"]),
                              float(cfg["stencil_h"]), resample_each_epoch=bool(cfg["resample_each_epoch"]))
            result = train_pinn(samples, pcfg)
            report["train_config"] = pcfg.to_dict()
            report["pde_loss"] = result.pde_loss
            report["final_pde_loss"] = result.final_pde_loss
        report["data_loss"] = result.data_loss
        report["total_loss"] = result.total_loss
        report["final_data_loss"] = result.final_data_loss
        surrogate = result.model
        doc = checkpoint(surrogate, method, train_config=report["train_config"],
                         frame=None if frame is None else frame.to_dict())
    if cfg["test"]:
        test, _ = _read_samples(cfg["test"])
        if len(test):
            report["test_mse"] = test_mse(surrogate, test).to_dict()
    out.json("model.json", doc)
    out.json("train_report.json", report)
    return EXIT_OK


def cmd_map(cfg: dict, out: Outputs) -> int:
    _require(cfg, "model")
    doc = _load_json(cfg["model"])
    surrogate = load_checkpoint(doc)
    grid = MapGrid(tuple(float(v) for v in cfg["bbox"]), int(cfg["nx"]), int(cfg["ny"]))
    rem = predict_map(surrogate, grid, doc["method"])
    out.text("rem.csv", rem.to_csv())
    out.json("rem.json", rem.sidecar())
    return EXIT_OK


def cmd_eval(cfg: dict, out: Outputs) -> int:
    _require(cfg, "model", "test")
    paths = cfg["model"] if isinstance(cfg["model"], list) else [cfg["model"]]
    test, _ = _read_samples(cfg["test"])
    if len(test) == 0:
        raise InsufficientDataError(f"no held-out samples in {cfg['test']}")
    results = {}
    for path in paths:
        doc = _load_json(path)
        tag = doc["method"]
        if tag in results:
            tag = f"{tag}:{Path(path).stem}"
        results[tag] = test_mse(load_checkpoint(doc), test)
    report = comparison_report(results)
    report["table"] = render_comparison(report).splitlines()
    out.json("mse_report.json", report)
    return EXIT_OK


def _read_matrix(path) -> AvailabilityMatrix:
    csv_text = _read_text(path)
    sidecar_path = Path(path).with_suffix(".json")
    side = _load_json(sidecar_path)
    state = np.array([[int(v) for v in ln.split(",")] for ln in csv_text.splitlines() if ln.strip()], dtype=np.int8)
    grid = ChannelGrid(float(side["start_mhz"]), float(side["channel_width_mhz"]), int(side["n_channels"]))
    return AvailabilityMatrix(grid, state, bool(side["two_site"]), float(side["start_s"]), float(side["slot_s"]),
                              side.get("coverage_gaps", {}))


def cmd_allocate(cfg: dict, out: Outputs) -> int:
    _require(cfg, "requests")
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    doc = _load_json(cfg["requests"])
    try:
        requests = [AllocationRequest(**r) for r in doc.get("requests", [])]
        pus = [TransmitterSpec(**p) for p in doc.get("pus", [])]
    except TypeError as exc:
        raise ValidationError(f"{cfg['requests']}: {exc}") from None
    grid = _grid(cfg)
    if cfg["availability"]:
        availability = _read_matrix(cfg["availability"])
    elif cfg["database_channels"] is not None:
        availability = [int(k) for k in cfg["database_channels"]]
    else:
        raise ConfigError("allocate needs either availability (matrix CSV) or database_channels")
    if cfg["mode"] == "database_conservative" and cfg["database_channels"] is not None:
        availability = [int(k) for k in cfg["database_channels"]]
    model = PathLossModel(cfg["path_loss"], float(cfg["exponent"]), float(cfg["d0_km"]), float(cfg["pl0_db"]))
    acfg = AllocationConfig(grid, float(cfg["database_eirp_cap_dbm"]), float(cfg["sensing_eirp_cap_dbm"]),
                            float(cfg["su_interference_threshold_dbm"]), float(cfg["pu_interference_threshold_dbm"]),
                            float(cfg["min_eirp_dbm"]), float(cfg["km_per_unit"]))
    plan = allocate(requests, availability, cfg["mode"], model, pus, acfg)
    out.json("allocation_plan.json", plan.to_dict())
    return EXIT_OK


def cmd_synth(cfg: dict, out: Outputs) -> int:
    kind = cfg["kind"]
    seed = int(cfg["seed"])
    if kind == "harmonic":
        out.text("train.csv", format_samples(harmonic_samples(int(cfg["n_train"]), seed, float(cfg["noise_std"]))))
        out.text("test.csv", format_samples(harmonic_test_set(int(cfg["n_test"]), seed + 10_000)))
        out.json("bench_config.json", {
            **BENCH_TRAIN, "lambda_pde": BENCH_LAMBDA_PDE, "n_collocation": BENCH_COLLOCATION,
            "seed": seed, "collocation_seed": seed,
        })
    elif kind == "occupancy":
        grid = _grid(cfg)
        a, b = synthetic_two_site(grid, int(cfg["n_slots"]), seed)
        out.text("site_a.csv", format_measurements(a))
        out.text("site_b.csv", format_measurements(b))
    else:
        raise ConfigError(f"synth kind must be harmonic or occupancy, got {kind!r}")
    return EXIT_OK


def synthetic_two_site(grid: ChannelGrid, n_slots: int, seed: int, t0: float = 1_700_000_000.0):
    """Two sites with per-channel planted duty cycles and some missing cells."""
    rng = np.random.Generator(np.random.PCG64(seed))
    duty_a = rng.uniform(0.0, 1.0, grid.n_channels)
    duty_b = np.clip(duty_a + rng.normal(0.0, 0.2, grid.n_channels), 0.0, 1.0)
    streams = []
    for site, duty, lat, lon in (("wilson", duty_a, 42.0270, -93.6480), ("agronomy", duty_b, 42.0090, -93.7550)):
        recs = []
        for s in range(n_slots):
            for c in range(grid.n_channels):
                if rng.random() < 0.02:
                    continue
                hot = rng.random() < duty[c]
                p = rng.uniform(-100.0, -60.0) if hot else rng.uniform(-125.0, -110.0)
                f = grid.start_mhz + (c + rng.uniform(0.05, 0.95)) * grid.channel_width_mhz
                recs.append(Measurement(t0 + s + 0.5, site, lat, lon, round(f, 4), round(p, 2)))
        streams.append(recs)
    return streams[0], streams[1]


COMMANDS = {
    "occupancy": cmd_occupancy,
    "fit": cmd_fit,
    "map": cmd_map,
    "eval": cmd_eval,
    "allocate": cmd_allocate,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specmap", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"specmap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("occupancy", help="band occupancy summary and availability matrix")
    common(p)
    p.add_argument("--input", help="measurement file (one or two sites)")
    p.add_argument("--input-b", dest="input_b", help="second-site measurement file")

    p = sub.add_parser("fit", help="fit a kriging, nn or pinn surrogate")
    common(p)
    p.add_argument("--method", choices=["kriging", "nn", "pinn"])
    p.add_argument("--input", help="sample file (x,y,z) or measurement file")
    p.add_argument("--test", help="held-out sample file")

    p = sub.add_parser("map", help="render a surrogate to a REM grid")
    common(p)
    p.add_argument("--model", help="checkpoint JSON")

    p = sub.add_parser("eval", help="held-out MSE of one or more checkpoints")
    common(p)
    p.add_argument("--model", action="append", help="checkpoint JSON (repeatable)")
    p.add_argument("--test", help="held-out sample file")

    p = sub.add_parser("allocate", help="white-space channel allocation")
    common(p)
    p.add_argument("--requests", help="JSON with 'requests' and optional 'pus'")
    p.add_argument("--availability", help="availability matrix CSV (sidecar .json alongside)")
    p.add_argument("--mode", choices=list(MODES))

    p = sub.add_parser("synth", help="write synthetic fixtures")
    common(p)
    p.add_argument("kind", nargs="?", choices=["harmonic", "occupancy"])
    return parser


_FLAG_KEYS = ("out", "input", "input_b", "method", "test", "model", "requests", "availability", "mode", "kind")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: getattr(args, k) for k in _FLAG_KEYS if hasattr(args, k)}
    out = None
    try:
        cfg = resolve_config(args.command, args.config, args.set, flags)
        _require(cfg, "out")
        out = Outputs(cfg["out"], args.command)
        out.json("config_echo.json", {"command": args.command, "config": cfg})
        code = COMMANDS[args.command](cfg, out)
        out.close("ok")
        return code
    except (ValidationError, ConfigError, FileNotFoundError) as exc:
        code, msg = EXIT_CONFIG, str(exc)
    except InsufficientDataError as exc:
        code, msg = EXIT_NO_DATA, f"no data: {exc}"
    except NumericError as exc:
        code, msg = EXIT_NUMERIC, f"numeric failure in {args.command}: {exc}"
    except SpecmapError as exc:
        code, msg = EXIT_CONFIG, str(exc)
    print(f"specmap {args.command}: {msg}", file=sys.stderr)
    if out is not None:
        out.log(f"error: {msg}")
        out.close(f"exit={code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
