"""Path-loss protection zones, EIRP-limited coverage and white-space allocation.

Two allocation policies are modelled:

``database_conservative``
    SUs may only use a static list of channels (what a geolocation database
    would publish) and every SU is capped at 16 dBm EIRP. Co-channel SUs are
    not coordinated; pairs within mutual interference range are flagged.

``sensing_dynamic``
    SUs may use any channel the availability matrix reports as free. Each
    SU's cap is the largest EIRP that keeps every co-channel PU at or below
    its interference threshold, limited to 42 dBm. A grant that would put two
    co-channel SUs within mutual interference range is not made; the request
    moves on to the next free run.

Interference is single-dominant-source: powers from several SUs are never
summed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ValidationError
from .ingest import TVWS_GRID, ChannelGrid, channel_index
from .occupancy import AvailabilityMatrix

FREE_SPACE_CONST_DB = 32.44  # d in km, f in MHz
DATABASE_EIRP_CAP_DBM = 16.0
SENSING_EIRP_CAP_DBM = 42.0
DEFAULT_INTERFERENCE_THRESHOLD_DBM = -118.0

DATABASE = "database_conservative"
SENSING = "sensing_dynamic"
MODES = (DATABASE, SENSING)

# keeps a capped SU strictly outside the PU protection radius despite rounding
_CAP_GUARD_DB = 1e-9


@dataclass(frozen=True)
class PathLossModel:
    """``free_space``: 20 log10(d) + 20 log10(f) + 32.44.
    ``log_distance``: PL0 + 10 n log10(d / d0), frequency independent.
    """

    kind: str = "free_space"
    exponent: float = 2.0
    d0_km: float = 1.0
    pl0_db: float = 88.0

    def __post_init__(self):
        if self.kind not in ("free_space", "log_distance"):
            raise ConfigError(f"unknown path-loss kind {self.kind!r}")
        if not self.exponent > 0 or not self.d0_km > 0:
            raise ConfigError("path loss requires exponent > 0 and d0_km > 0")

    def slope_db_per_decade(self) -> float:
        return 20.0 if self.kind == "free_space" else 10.0 * self.exponent

    def loss_at_1km(self, freq_mhz: float) -> float:
        if self.kind == "free_space":
            return 20.0 * math.log10(freq_mhz) + FREE_SPACE_CONST_DB
        return self.pl0_db - 10.0 * self.exponent * math.log10(self.d0_km)

    def distance_for_loss(self, loss_db: float, freq_mhz: float) -> float:
        """Closed-form inverse: the distance (km) at which path loss equals ``loss_db``."""
        if loss_db == -math.inf:
            return 0.0
        return 10.0 ** ((loss_db - self.loss_at_1km(freq_mhz)) / self.slope_db_per_decade())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "exponent": self.exponent, "d0_km": self.d0_km, "pl0_db": self.pl0_db}


def path_loss_db(model: PathLossModel, distance_km, freq_mhz: float):
    d = np.asarray(distance_km, dtype=float)
    if np.any(~(d > 0)):
        raise ValidationError("path loss requires distance_km > 0")
    if not freq_mhz > 0:
        raise ValidationError("path loss requires freq_mhz > 0")
    if model.kind == "free_space":
        loss = 20.0 * np.log10(d) + 20.0 * math.log10(freq_mhz) + FREE_SPACE_CONST_DB
    else:
        loss = model.pl0_db + 10.0 * model.exponent * np.log10(d / model.d0_km)
    return float(loss) if loss.ndim == 0 else loss


@dataclass(frozen=True)
class TransmitterSpec:
    site: tuple
    eirp_dbm: float
    freq_mhz: float
    rx_sensitivity_dbm: Optional[float] = None
    interference_threshold_dbm: Optional[float] = None
    tx_id: str = ""


def _radius_for_budget(budget_db: float, model: PathLossModel, freq_mhz: float) -> float:
    # budgets this low are unsolvable in practice: report zero coverage
    if budget_db <= -200.0 or math.isnan(budget_db):
        return 0.0
    return model.distance_for_loss(budget_db, freq_mhz)


def coverage_radius_km(tx: TransmitterSpec, model: PathLossModel) -> float:
    """Largest distance at which received power still meets the receiver sensitivity.

    Returns 0.0 for a transmitter that is off (EIRP = -inf) or whose link
    budget is 200 dB or more below the sensitivity.
    """
    if tx.rx_sensitivity_dbm is None:
        raise ConfigError("coverage needs rx_sensitivity_dbm")
    return _radius_for_budget(tx.eirp_dbm - tx.rx_sensitivity_dbm, model, tx.freq_mhz)


def protection_radius_km(pu: TransmitterSpec, su_eirp_dbm: float, model: PathLossModel) -> float:
    """Minimum SU-PU separation keeping the SU signal at the PU at or below its threshold."""
    threshold = pu.interference_threshold_dbm
    if threshold is None:
        threshold = DEFAULT_INTERFERENCE_THRESHOLD_DBM
    return _radius_for_budget(su_eirp_dbm - threshold, model, pu.freq_mhz)


class Priority(str, enum.Enum):
    PU = "PU"
    SU = "SU"


class Reason(str, enum.Enum):
    NO_FREE_RUN = "NO_FREE_RUN"
    PU_PROTECTION = "PU_PROTECTION"
    SU_CONFLICT = "SU_CONFLICT"
    BANDWIDTH_EXCEEDS_GRID = "BANDWIDTH_EXCEEDS_GRID"


@dataclass(frozen=True)
class AllocationRequest:
    requester_id: str
    bandwidth_mhz: float
    site: tuple
    eirp_desired_dbm: float
    priority: Priority = Priority.SU
    slots: Optional[tuple] = None  # half-open slot window; None = whole matrix

    def __post_init__(self):
        if not self.bandwidth_mhz > 0:
            raise ValidationError(f"request {self.requester_id}: bandwidth_mhz > 0 violated")
        object.__setattr__(self, "priority", Priority(self.priority))


@dataclass(frozen=True)
class Grant:
    requester_id: str
    channels: tuple
    eirp_cap_dbm: float
    eirp_dbm: float
    priority: Priority
    site: tuple

    def to_dict(self) -> dict:
        return {
            "requester_id": self.requester_id,
            "channels": list(self.channels),
            "eirp_cap_dbm": self.eirp_cap_dbm,
            "eirp_dbm": self.eirp_dbm,
            "priority": self.priority.value,
        }


@dataclass(frozen=True)
class Rejection:
    requester_id: str
    reason: Reason
    detail: str = ""

    def to_dict(self) -> dict:
        return {"requester_id": self.requester_id, "reason": self.reason.value, "detail": self.detail}


@dataclass(frozen=True)
class Conflict:
    a: str
    b: str
    channels: tuple
    separation_km: float
    range_km: float

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "channels": list(self.channels),
            "separation_km": self.separation_km,
            "range_km": self.range_km,
        }


@dataclass
class AllocationPlan:
    mode: str
    grants: list = field(default_factory=list)
    rejections: list = field(default_factory=list)
    conflicts: list = field(default_factory=list)

    def grant_for(self, requester_id: str) -> Optional[Grant]:
        return next((g for g in self.grants if g.requester_id == requester_id), None)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "grants": [g.to_dict() for g in self.grants],
            "rejections": [r.to_dict() for r in self.rejections],
            "conflicts": [c.to_dict() for c in self.conflicts],
        }


@dataclass(frozen=True)
class AllocationConfig:
    grid: ChannelGrid = TVWS_GRID
    database_eirp_cap_dbm: float = DATABASE_EIRP_CAP_DBM
    sensing_eirp_cap_dbm: float = SENSING_EIRP_CAP_DBM
    su_interference_threshold_dbm: float = DEFAULT_INTERFERENCE_THRESHOLD_DBM
    pu_interference_threshold_dbm: float = DEFAULT_INTERFERENCE_THRESHOLD_DBM
    min_eirp_dbm: float = 0.0  # sensing-mode grants below this are not useful
    km_per_unit: float = 1.0  # site coordinates -> km

    def __post_init__(self):
        if not self.km_per_unit > 0:
            raise ConfigError("km_per_unit > 0 violated")


def channel_center_mhz(grid: ChannelGrid, k: int) -> float:
    return grid.start_mhz + (k + 0.5) * grid.channel_width_mhz


def channels_needed(bandwidth_mhz: float, grid: ChannelGrid) -> int:
    # tolerate float noise such as 12.000000000000002 MHz
    return max(1, int(math.ceil(round(bandwidth_mhz / grid.channel_width_mhz, 9))))


def separation_km(a, b, config: AllocationConfig) -> float:
    return float(math.hypot(a[0] - b[0], a[1] - b[1])) * config.km_per_unit


def mutual_range_km(eirp_a: float, eirp_b: float, freq_mhz: float, model: PathLossModel,
                    config: AllocationConfig) -> float:
    """Distance below which either SU would exceed the other's interference threshold."""
    victim = TransmitterSpec((0.0, 0.0), 0.0, freq_mhz,
                             interference_threshold_dbm=config.su_interference_threshold_dbm)
    return max(protection_radius_km(victim, eirp_a, model), protection_radius_km(victim, eirp_b, model))


def _conflict(g1: Grant, g2: Grant, model: PathLossModel, config: AllocationConfig) -> Optional[Conflict]:
    shared = sorted(set(g1.channels) & set(g2.channels))
    if not shared:
        return None
    # lowest shared channel: the longest free-space range of the overlap
    rng = mutual_range_km(g1.eirp_dbm, g2.eirp_dbm, channel_center_mhz(config.grid, shared[0]), model, config)
    d = separation_km(g1.site, g2.site, config)
    if d < rng:
        return Conflict(g1.requester_id, g2.requester_id, tuple(shared), d, rng)
    return None


def _free_channels(availability, grid: ChannelGrid, request: AllocationRequest) -> np.ndarray:
    if isinstance(availability, AvailabilityMatrix):
        if availability.grid.n_channels != grid.n_channels:
            raise ConfigError("availability matrix does not cover the allocation channel grid")
        return availability.free_mask(request.slots)
    mask = np.zeros(grid.n_channels, dtype=bool)
    for k in availability:
        k = int(k)
        if not 0 <= k < grid.n_channels:
            raise ConfigError(f"static channel {k} outside grid of {grid.n_channels} channels")
        mask[k] = True
    return mask


def _runs(mask: np.ndarray, k: int) -> list:
    """Start indices of every length-k window of True values, ascending."""
    n = len(mask)
    return [s for s in range(n - k + 1) if mask[s:s + k].all()]


def pu_eirp_limit(site, channels, pus: Sequence[TransmitterSpec], model: PathLossModel,
                  config: AllocationConfig) -> float:
    """Highest EIRP keeping every co-channel PU at or below its threshold (+inf if none)."""
    limit = math.inf
    for pu in pus:
        if not config.grid.contains(pu.freq_mhz):
            continue
        if channel_index(pu.freq_mhz, config.grid) not in channels:
            continue
        threshold = pu.interference_threshold_dbm
        if threshold is None:
            threshold = config.pu_interference_threshold_dbm
        d = separation_km(site, pu.site, config)
        if d <= 0:
            return -math.inf
        limit = min(limit, threshold + path_loss_db(model, d, pu.freq_mhz) - _CAP_GUARD_DB)
    return limit


def processing_order(requests: Sequence[AllocationRequest]) -> list:
    """PU requests first, then SU requests; arrival order within each class."""
    return sorted(requests, key=lambda r: 0 if r.priority is Priority.PU else 1)


def allocate(requests: Sequence[AllocationRequest], availability, mode: str,
             model: PathLossModel = PathLossModel(), pus: Sequence[TransmitterSpec] = (),
             config: AllocationConfig = AllocationConfig()) -> AllocationPlan:
    """First-fit contiguous channel allocation under either policy.

    ``availability`` is an :class:`AvailabilityMatrix` or a static list of
    usable channel indices. Requests are handled in priority-then-arrival
    order and each takes the lowest-index contiguous run of usable channels
    wide enough for its bandwidth. PU-class requests are granted their
    desired EIRP, take their channels out of circulation and, in sensing
    mode, become protected incumbents.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown allocation mode {mode!r}; expected one of {MODES}")
    grid = config.grid
    plan = AllocationPlan(mode)
    protected = list(pus)
    taken = np.zeros(grid.n_channels, dtype=bool)
    su_grants: list[Grant] = []

    for req in processing_order(requests):
        k = channels_needed(req.bandwidth_mhz, grid)
        if k > grid.n_channels:
            plan.rejections.append(Rejection(req.requester_id, Reason.BANDWIDTH_EXCEEDS_GRID,
                                             f"needs {k} channels, grid has {grid.n_channels}"))
            continue
        usable = _free_channels(availability, grid, req) & ~taken
        starts = _runs(usable, k)
        if not starts:
            plan.rejections.append(Rejection(req.requester_id, Reason.NO_FREE_RUN,
                                             f"no run of {k} contiguous usable channels"))
            continue

        if req.priority is Priority.PU:
            chans = tuple(range(starts[0], starts[0] + k))
            plan.grants.append(Grant(req.requester_id, chans, req.eirp_desired_dbm, req.eirp_desired_dbm,
                                     req.priority, tuple(req.site)))
            taken[list(chans)] = True
            for c in chans:
                protected.append(TransmitterSpec(tuple(req.site), req.eirp_desired_dbm, channel_center_mhz(grid, c),
                                                 interference_threshold_dbm=config.pu_interference_threshold_dbm,
                                                 tx_id=req.requester_id))
            continue

        if mode == DATABASE:
            chans = tuple(range(starts[0], starts[0] + k))
            cap = config.database_eirp_cap_dbm
            grant = Grant(req.requester_id, chans, cap, min(req.eirp_desired_dbm, cap), req.priority, tuple(req.site))
            for other in su_grants:
                c = _conflict(other, grant, model, config)
                if c is not None:
                    plan.conflicts.append(c)
            su_grants.append(grant)
            plan.grants.append(grant)
            continue

        granted = None
        passed_pu = False
        for s in starts:
            chans = tuple(range(s, s + k))
            cap = min(config.sensing_eirp_cap_dbm, pu_eirp_limit(req.site, chans, protected, model, config))
            if cap < config.min_eirp_dbm:
                continue
            passed_pu = True
            grant = Grant(req.requester_id, chans, cap, min(req.eirp_desired_dbm, cap), req.priority, tuple(req.site))
            if any(_conflict(other, grant, model, config) is not None for other in su_grants):
                continue
            granted = grant
            break
        if granted is None:
            reason = Reason.SU_CONFLICT if passed_pu else Reason.PU_PROTECTION
            plan.rejections.append(Rejection(req.requester_id, reason, f"all {len(starts)} candidate runs blocked"))
            continue
        su_grants.append(granted)
        plan.grants.append(granted)
    return plan
