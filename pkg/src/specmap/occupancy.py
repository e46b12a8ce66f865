"""Energy-detection occupancy statistics and channel x slot availability matrices.

Occupancy is defined per time slot as the fraction of channels (with at least
one sample in that slot) whose channel-slot cell is occupied; a cell is
occupied when any of its samples exceeds the decision threshold. Band
summaries aggregate the per-slot fractions by arithmetic mean and by the
nearest-rank 95th percentile.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError, ValidationError
from .ingest import ChannelGrid, Measurement

# -118 dBm observed noise floor + 10 dB detection margin
DEFAULT_THRESHOLD_DBM = -108.0

OCCUPANCY_DEFINITION = (
    "per-slot fraction of sampled channels whose cell has any sample above "
    "threshold_dbm; avg = mean over slots with data, p95 = nearest-rank 95th percentile"
)


@dataclass(frozen=True)
class OccupancyConfig:
    threshold_dbm: float = DEFAULT_THRESHOLD_DBM
    slot_s: float = 1.0
    window_s: float = 900.0
    start_s: Optional[float] = None  # window start; None = earliest timestamp in the input

    def __post_init__(self):
        if not self.slot_s > 0:
            raise ConfigError("slot_s > 0 violated")
        if not self.window_s >= self.slot_s:
            raise ConfigError("window_s >= slot_s violated")

    @property
    def n_slots(self) -> int:
        return int(math.ceil(self.window_s / self.slot_s))


class SiteState(enum.IntEnum):
    """Single-site cell values as written to matrix CSV files."""

    FREE = 0
    OCCUPIED = 1


class JointState(enum.IntEnum):
    """Two-site cell values as written to matrix CSV files."""

    FREE_BOTH = 0
    FREE_ONE = 1
    OCCUPIED_BOTH = 2


SINGLE_SITE_LEGEND = {"0": "FREE", "1": "OCCUPIED"}
TWO_SITE_LEGEND = {"0": "FREE_BOTH", "1": "FREE_ONE", "2": "OCCUPIED_BOTH"}


@dataclass
class AvailabilityMatrix:
    """Channel x slot state matrix.

    ``state[c, s]`` holds :class:`JointState` values in two-site mode and
    :class:`SiteState` values otherwise.
    """

    grid: ChannelGrid
    state: np.ndarray
    two_site: bool
    start_s: float
    slot_s: float
    coverage_gaps: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.state.shape[0] != self.grid.n_channels:
            raise ValidationError("state rows must equal grid.n_channels")

    @property
    def n_slots(self) -> int:
        return self.state.shape[1]

    @property
    def legend(self) -> dict:
        return TWO_SITE_LEGEND if self.two_site else SINGLE_SITE_LEGEND

    def free_mask(self, slots: Optional[tuple] = None) -> np.ndarray:
        """Channels free in every slot of ``slots`` (half-open), or of the whole window.

        In two-site mode only FREE_BOTH counts as free.
        """
        lo, hi = (0, self.n_slots) if slots is None else slots
        free_value = JointState.FREE_BOTH if self.two_site else SiteState.FREE
        return np.all(self.state[:, lo:hi] == free_value, axis=1)

    def to_csv(self) -> str:
        return "".join(",".join(str(int(v)) for v in row) + "\n" for row in self.state)

    def sidecar(self) -> dict:
        return {
            "rows": "channel index (row 0 = lowest frequency)",
            "columns": "time slot index (column 0 = window start)",
            "legend": self.legend,
            "two_site": self.two_site,
            "start_mhz": self.grid.start_mhz,
            "channel_width_mhz": self.grid.channel_width_mhz,
            "n_channels": self.grid.n_channels,
            "n_slots": self.n_slots,
            "start_s": self.start_s,
            "slot_s": self.slot_s,
            "coverage_gaps": self.coverage_gaps,
        }


@dataclass(frozen=True)
class BandSummary:
    band_name: str
    span_mhz: tuple
    avg_occupancy: Optional[float]
    p95_occupancy: Optional[float]
    n_slots: int

    @property
    def no_data(self) -> bool:
        return self.n_slots == 0

    def to_dict(self) -> dict:
        return {
            "band_name": self.band_name,
            "span_mhz": list(self.span_mhz),
            "avg_occupancy": self.avg_occupancy,
            "p95_occupancy": self.p95_occupancy,
            "n_slots": self.n_slots,
            "no_data": self.no_data,
        }

    def render(self) -> str:
        lo, hi = self.span_mhz
        span = f"{lo:g}–{hi:g}"
        if self.no_data:
            return f"{self.band_name} {span}: no data"
        return (
            f"{self.band_name} {span}: avg {100 * self.avg_occupancy:.1f}%, "
            f"p95 {100 * self.p95_occupancy:.1f}%"
        )


def is_occupied(power_dbm, threshold_dbm) -> bool:
    """Strict energy detection: occupied iff power exceeds the threshold."""
    return power_dbm > threshold_dbm


def _cells(measurements: Sequence[Measurement], grid: ChannelGrid, config: OccupancyConfig, start_s: float):
    """Reduce samples to (has_data, occupied) boolean channel x slot arrays.

    Samples outside the grid span or the analysis window are ignored.
    """
    n_slots = config.n_slots
    has_data = np.zeros((grid.n_channels, n_slots), dtype=bool)
    occupied = np.zeros((grid.n_channels, n_slots), dtype=bool)
    if not measurements:
        return has_data, occupied
    t = np.array([m.timestamp_s for m in measurements], dtype=float)
    f = np.array([m.freq_mhz for m in measurements], dtype=float)
    p = np.array([m.power_dbm for m in measurements], dtype=float)
    slot = np.floor((t - start_s) / config.slot_s)
    chan = np.floor((f - grid.start_mhz) / grid.channel_width_mhz)
    keep = (slot >= 0) & (slot < n_slots) & (f >= grid.start_mhz) & (f < grid.stop_mhz)
    slot = slot[keep].astype(int)
    chan = np.minimum(chan[keep].astype(int), grid.n_channels - 1)
    hot = p[keep] > config.threshold_dbm
    has_data[chan, slot] = True
    # logical-or scatter; order independent
    np.logical_or.at(occupied, (chan, slot), hot)
    return has_data, occupied


def _start(config: OccupancyConfig, *streams) -> float:
    if config.start_s is not None:
        return float(config.start_s)
    stamps = [m.timestamp_s for s in streams for m in s]
    return float(min(stamps)) if stamps else 0.0


def slot_counts(measurements: Sequence[Measurement], grid: ChannelGrid,
                config: OccupancyConfig) -> dict[int, tuple[int, int]]:
    """Per-slot (occupied channels, sampled channels), keyed by slot index; empty slots omitted."""
    if not measurements:
        return {}
    has_data, occupied = _cells(measurements, grid, config, _start(config, measurements))
    sampled = has_data.sum(axis=0)
    hot = occupied.sum(axis=0)
    return {int(s): (int(hot[s]), int(sampled[s])) for s in np.flatnonzero(sampled)}


def slot_occupancy(measurements: Sequence[Measurement], grid: ChannelGrid, config: OccupancyConfig) -> dict[int, float]:
    """Per-slot occupied-channel fraction, keyed by slot index.

    Slots with no samples are omitted. Empty input gives an empty dict.
    """
    return {s: hot / sampled for s, (hot, sampled) in slot_counts(measurements, grid, config).items()}


def nearest_rank_percentile(values: Sequence[float], q: float) -> float:
    """The ceil(q*n)-th smallest value (1-based), with rank clamped to [1, n]."""
    if not values:
        raise InsufficientDataError("percentile of an empty set")
    ordered = sorted(values)
    # round before ceil so 0.95*n lands exactly on integers like 95
    rank = int(math.ceil(round(q * len(ordered), 9)))
    rank = min(max(rank, 1), len(ordered))
    return ordered[rank - 1]


def band_summary(
    measurements: Sequence[Measurement],
    grid: ChannelGrid,
    config: OccupancyConfig,
    band_name: str = "band",
) -> BandSummary:
    counts = slot_counts(measurements, grid, config)
    span = (grid.start_mhz, grid.stop_mhz)
    if not counts:
        return BandSummary(band_name, span, None, None, 0)
    exact = [Fraction(hot, sampled) for hot, sampled in counts.values()]
    # exact rational mean, rounded once: identical for any slot order
    avg = float(sum(exact) / len(exact))
    values = [hot / sampled for hot, sampled in counts.values()]
    p95 = nearest_rank_percentile(values, 0.95)
    return BandSummary(band_name, span, avg, p95, len(values))


def single_site_availability(
    measurements: Sequence[Measurement], grid: ChannelGrid, config: OccupancyConfig
) -> AvailabilityMatrix:
    """FREE/OCCUPIED matrix for one site; cells without samples count as FREE."""
    start = _start(config, measurements)
    has_data, occupied = _cells(measurements, grid, config, start)
    state = np.where(occupied, SiteState.OCCUPIED, SiteState.FREE).astype(np.int8)
    gaps = {"site": int((~has_data).sum())}
    return AvailabilityMatrix(grid, state, False, start, config.slot_s, gaps)


def joint_availability(
    site_a: Sequence[Measurement],
    site_b: Sequence[Measurement],
    grid: ChannelGrid,
    config: OccupancyConfig,
) -> AvailabilityMatrix:
    """Two-site availability: FREE_BOTH, FREE_ONE or OCCUPIED_BOTH per cell.

    Missing data at a site counts as FREE at that site; the number of such
    cells per site is recorded in ``coverage_gaps``. Raises
    :class:`ValidationError` when the two streams do not overlap in time.
    """
    if not site_a or not site_b:
        raise InsufficientDataError("joint availability needs samples from both sites")
    ta = [m.timestamp_s for m in site_a]
    tb = [m.timestamp_s for m in site_b]
    if max(ta) < min(tb) or max(tb) < min(ta):
        raise ValidationError("site streams cover disjoint time windows; nothing to correlate")
    start = _start(config, site_a, site_b)
    data_a, occ_a = _cells(site_a, grid, config, start)
    data_b, occ_b = _cells(site_b, grid, config, start)
    n_occ = occ_a.astype(np.int8) + occ_b.astype(np.int8)
    state = np.select(
        [n_occ == 2, n_occ == 1], [JointState.OCCUPIED_BOTH, JointState.FREE_ONE], JointState.FREE_BOTH
    ).astype(np.int8)
    gaps = {"site_a": int((~data_a).sum()), "site_b": int((~data_b).sum())}
    return AvailabilityMatrix(grid, state, True, start, config.slot_s, gaps)


def split_sites(measurements: Sequence[Measurement]) -> dict[str, list[Measurement]]:
    """Group records by site id, preserving order within each site."""
    out: dict[str, list[Measurement]] = {}
    for m in measurements:
        out.setdefault(m.site_id, []).append(m)
    return out
