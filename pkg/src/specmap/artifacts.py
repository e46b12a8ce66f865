"""On-disk formats: sample tables, checkpoints and deterministic JSON."""

from __future__ import annotations

import json

import numpy as np

from .errors import ConfigError, ValidationError
from .geostat import KrigingModel, VariogramModel, as_xyz
from .ingest import HEADER, CoordFrame, fit_frame, parse_measurements
from .neural import MlpModel
from .rem import ConstantSurrogate, LookupSurrogate

SAMPLE_HEADER = ("x", "y", "z")
CHECKPOINT_FORMAT = "specmap-checkpoint/1"


def dumps(obj) -> str:
    """Sorted-key, indented JSON; floats use Python's shortest round-trip repr."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def format_samples(samples) -> str:
    s = as_xyz(samples)
    lines = [",".join(SAMPLE_HEADER)]
    lines += [f"{x!r},{y!r},{z!r}" for x, y, z in s.tolist()]
    return "\n".join(lines) + "\n"


def parse_samples(text: str) -> tuple[np.ndarray, CoordFrame | None]:
    """Read a sample table.

    Accepts either ``x,y,z`` rows in normalized coordinates, or a measurement
    file, in which case a bounding-box frame is fitted and ``z`` is the
    received power. Returns the (n, 3) array and the frame (or None).
    """
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ValidationError("sample file has no header")
    header = tuple(c.strip() for c in rows[0].split(","))
    if header == HEADER:
        records = parse_measurements(text)
        if not records:
            return np.zeros((0, 3)), None
        frame = fit_frame(records)
        x, y = frame.normalize([m.lat_deg for m in records], [m.lon_deg for m in records])
        return np.column_stack([x, y, [m.power_dbm for m in records]]), frame
    if header != SAMPLE_HEADER:
        raise ValidationError(f"line 1: expected header x,y,z or {','.join(HEADER)}", line=1)
    out = []
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#") or tuple(c.strip() for c in stripped.split(",")) == SAMPLE_HEADER:
            continue
        parts = stripped.split(",")
        if len(parts) != 3:
            raise ValidationError(f"line {lineno}: expected 3 columns, got {len(parts)}", line=lineno)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ValidationError(f"line {lineno}: non-numeric value", line=lineno) from None
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"line {lineno}: non-finite value", line=lineno)
        out.append(vals)
    return np.array(out, dtype=float).reshape(-1, 3), None


def checkpoint(surrogate, method: str, **extra) -> dict:
    """Serialisable description of a fitted surrogate."""
    doc = {"format": CHECKPOINT_FORMAT, "method": method}
    if method == "kriging":
        doc["variogram"] = surrogate.variogram.to_dict()
        doc["samples"] = surrogate.samples.tolist()
        doc["n_bins"] = surrogate.n_bins
        doc["max_lag"] = surrogate.max_lag
    elif method in ("nn", "pinn"):
        doc["model"] = surrogate.to_dict()
    elif method == "constant":
        doc["value"] = surrogate.value
    elif method == "lookup":
        doc["samples"] = surrogate.samples.tolist()
    else:
        raise ConfigError(f"unknown checkpoint method {method!r}")
    doc.update({k: v for k, v in extra.items() if v is not None})
    return doc


def load_checkpoint(doc: dict):
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"not a {CHECKPOINT_FORMAT} document")
    method = doc.get("method")
    if method == "kriging":
        km = KrigingModel(n_bins=doc.get("n_bins", 12), max_lag=doc.get("max_lag"))
        return km.set_model(np.array(doc["samples"], dtype=float), VariogramModel.from_dict(doc["variogram"]))
    if method in ("nn", "pinn"):
        m = MlpModel.from_dict(doc["model"])
        m.tag = method
        return m
    if method == "constant":
        return ConstantSurrogate(doc["value"])
    if method == "lookup":
        return LookupSurrogate(np.array(doc["samples"], dtype=float))
    raise ValidationError(f"unknown checkpoint method {method!r}")


def frame_from_dict(d) -> CoordFrame | None:
    return None if d is None else CoordFrame(**d)
