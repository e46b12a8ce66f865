"""Measurement records, channelization and coordinate normalization.

Measurement files are UTF-8, comma-delimited, with the mandatory header::

    timestamp_s,site_id,lat_deg,lon_deg,freq_mhz,power_dbm

Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateError, ValidationError

HEADER = ("timestamp_s", "site_id", "lat_deg", "lon_deg", "freq_mhz", "power_dbm")


@dataclass(frozen=True)
class Measurement:
    timestamp_s: float
    site_id: str
    lat_deg: float
    lon_deg: float
    freq_mhz: float
    power_dbm: float

    def __post_init__(self):
        for name in ("timestamp_s", "lat_deg", "lon_deg", "freq_mhz", "power_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite", field=name)
        if self.timestamp_s < 0:
            raise ValidationError("timestamp_s >= 0 violated", field="timestamp_s")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValidationError("lat_deg in [-90, 90] violated (latitude)", field="lat_deg")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValidationError("lon_deg in [-180, 180] violated (longitude)", field="lon_deg")
        if not self.freq_mhz > 0:
            raise ValidationError("freq_mhz > 0 violated", field="freq_mhz")
        if not -200.0 <= self.power_dbm <= 50.0:
            raise ValidationError("power_dbm in [-200, 50] violated", field="power_dbm")


@dataclass(frozen=True)
class ChannelGrid:
    """Uniform channelization; channel k spans [start + k*width, start + (k+1)*width)."""

    start_mhz: float
    channel_width_mhz: float = 6.0
    n_channels: int = 1

    def __post_init__(self):
        if not self.channel_width_mhz > 0:
            raise ValidationError("channel_width_mhz > 0 violated")
        if self.n_channels < 1:
            raise ValidationError("n_channels >= 1 violated")

    @property
    def stop_mhz(self) -> float:
        return self.start_mhz + self.n_channels * self.channel_width_mhz

    def contains(self, freq_mhz: float) -> bool:
        return self.start_mhz <= freq_mhz < self.stop_mhz


# 470-608 MHz broadcast TV block, 23 channels of 6 MHz
TVWS_GRID = ChannelGrid(470.0, 6.0, 23)


def channel_index(freq_mhz: float, grid: ChannelGrid) -> int:
    """Index of the channel containing ``freq_mhz``; the upper band edge is exclusive."""
    if not grid.contains(freq_mhz):
        raise ValidationError(
            f"frequency {freq_mhz} MHz outside grid [{grid.start_mhz}, {grid.stop_mhz})",
            field="freq_mhz",
        )
    k = int(math.floor((freq_mhz - grid.start_mhz) / grid.channel_width_mhz))
    # guard against rounding just below the exclusive edge
    return min(k, grid.n_channels - 1)


def _parse_float(value: str, line: int, column: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ValidationError(
            f"line {line}: column {column!r}: cannot parse {value!r} as a number",
            line=line,
            field=column,
        ) from None
    return out


def parse_measurements(text: str) -> list[Measurement]:
    """Parse a measurement stream, preserving input order.

    Errors name the 1-based physical line number and the offending column.
    """
    lines = text.splitlines()
    header_seen = False
    records: list[Measurement] = []
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = next(csv.reader([raw]))
        fields = [f.strip() for f in fields]
        if not header_seen:
            if tuple(fields) != HEADER:
                raise ValidationError(
                    f"line {lineno}: expected header {','.join(HEADER)}", line=lineno
                )
            header_seen = True
            continue
        if len(fields) != len(HEADER):
            raise ValidationError(
                f"line {lineno}: expected {len(HEADER)} columns, got {len(fields)}",
                line=lineno,
            )
        values = dict(zip(HEADER, fields))
        if not values["site_id"]:
            raise ValidationError(f"line {lineno}: column 'site_id' is empty", line=lineno, field="site_id")
        nums = {c: _parse_float(values[c], lineno, c) for c in HEADER if c != "site_id"}
        try:
            records.append(Measurement(site_id=values["site_id"], **nums))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}", line=lineno, field=exc.field) from None
    if not header_seen:
        raise ValidationError("missing header line")
    return records


def read_measurements(path) -> list[Measurement]:
    with open(path, encoding="utf-8") as fh:
        return parse_measurements(fh.read())


def format_measurements(records: Iterable[Measurement]) -> str:
    """Render records back to the canonical text format.

    Timestamps are written at full precision so that 1 s slotting survives a
    round trip; the other numeric fields use 9 significant digits.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for m in records:
        writer.writerow(
            [
                repr(float(m.timestamp_s)),
                m.site_id,
                f"{m.lat_deg:.9g}",
                f"{m.lon_deg:.9g}",
                f"{m.freq_mhz:.9g}",
                f"{m.power_dbm:.9g}",
            ]
        )
    return buf.getvalue()


@dataclass(frozen=True)
class CoordFrame:
    """Axis-aligned affine map from (lon, lat) degrees to the unit box [-1, 1]^2.

    ``x = (lon - lon0) * scale_x`` and ``y = (lat - lat0) * scale_y`` where
    (lon0, lat0) is the bounding-box centre.
    """

    lat0_deg: float
    lon0_deg: float
    scale_x: float
    scale_y: float

    def normalize(self, lat_deg, lon_deg):
        x = (np.asarray(lon_deg, dtype=float) - self.lon0_deg) * self.scale_x
        y = (np.asarray(lat_deg, dtype=float) - self.lat0_deg) * self.scale_y
        return x, y

    def denormalize(self, x, y):
        lon = np.asarray(x, dtype=float) / self.scale_x + self.lon0_deg
        lat = np.asarray(y, dtype=float) / self.scale_y + self.lat0_deg
        return lat, lon

    def to_dict(self) -> dict:
        return {
            "lat0_deg": self.lat0_deg,
            "lon0_deg": self.lon0_deg,
            "scale_x": self.scale_x,
            "scale_y": self.scale_y,
        }


MIN_HALF_EXTENT_DEG = 1e-9


def fit_frame(measurements: Sequence[Measurement]) -> CoordFrame:
    """Fit the bounding-box frame of the measurement locations.

    An axis with zero extent (all points on one meridian or parallel) gets the
    scale of the other axis so the map stays invertible; half-extents below
    ``MIN_HALF_EXTENT_DEG`` count as zero. Raises :class:`DegenerateError`
    when every point is co-located.
    """
    if not measurements:
        raise DegenerateError("cannot fit a coordinate frame to zero measurements")
    lats = np.array([m.lat_deg for m in measurements], dtype=float)
    lons = np.array([m.lon_deg for m in measurements], dtype=float)
    lat_lo, lat_hi = lats.min(), lats.max()
    lon_lo, lon_hi = lons.min(), lons.max()
    half_x = (lon_hi - lon_lo) / 2.0
    half_y = (lat_hi - lat_lo) / 2.0
    # sub-millimetre spreads are rounding noise, not geometry
    if half_x < MIN_HALF_EXTENT_DEG:
        half_x = 0.0
    if half_y < MIN_HALF_EXTENT_DEG:
        half_y = 0.0
    if half_x == 0 and half_y == 0:
        raise DegenerateError("all measurements are co-located; frame is degenerate")
    if half_x == 0:
        half_x = half_y
    if half_y == 0:
        half_y = half_x
    lat0 = float((lat_lo + lat_hi) / 2.0)
    lon0 = float((lon_lo + lon_hi) / 2.0)
    return CoordFrame(
        lat0_deg=lat0,
        lon0_deg=lon0,
        scale_x=_unit_scale(lons, lon0, half_x),
        scale_y=_unit_scale(lats, lat0, half_y),
    )


def _unit_scale(values: np.ndarray, center: float, half: float) -> float:
    # rounding can push an extreme point one ulp past 1; step the scale down until it cannot
    scale = 1.0 / half
    while np.max(np.abs((values - center) * scale)) > 1.0:
        scale = float(np.nextafter(scale, 0.0))
    return float(scale)
