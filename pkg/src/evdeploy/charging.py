"""Charger types and the per-agent charging decision rules."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

from .network import ConfigurationError


class SimulationError(RuntimeError):
    """Raised for invalid inputs to the day simulator."""


class ChargerType(enum.Enum):
    AC_7_2 = "AC_7_2"
    AC_22 = "AC_22"
    DC_150 = "DC_150"

    @property
    def power_kw(self) -> float:
        return _POWER[self]

    @property
    def is_dc(self) -> bool:
        return self is ChargerType.DC_150

    @property
    def index(self) -> int:
        return _ORDER.index(self)


_POWER = {ChargerType.AC_7_2: 7.2, ChargerType.AC_22: 22.0, ChargerType.DC_150: 150.0}
# fixed type order used for arrays (n[:, k]) and for rule application
_ORDER = (ChargerType.AC_7_2, ChargerType.AC_22, ChargerType.DC_150)
CHARGER_TYPES = _ORDER
AC_TYPES = (ChargerType.AC_7_2, ChargerType.AC_22)


@dataclass(frozen=True)
class Thresholds:
    """Lower/upper SoC thresholds (fractions) of the destination charging rule."""

    low: float
    high: float

    def __post_init__(self):
        if not (0.0 <= self.low < self.high <= 1.0):
            raise ConfigurationError(
                f"thresholds must satisfy 0 <= low < high <= 1, got ({self.low}, {self.high})")


@dataclass(frozen=True)
class ChargingBehaviorParams:
    public: Thresholds = Thresholds(0.2, 0.8)
    residential: Thresholds = Thresholds(0.3, 0.9)
    enroute_margin: float = 0.1
    enroute_buffer: float = 0.2
    max_wait_s: float = 3600.0
    service_radius_km: float = 1.0

    def __post_init__(self):
        if self.enroute_margin < 0 or self.enroute_buffer < 0:
            raise ConfigurationError("en-route margin and buffer must be >= 0")
        if self.max_wait_s < 0 or self.service_radius_km < 0:
            raise ConfigurationError("max wait and service radius must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ChargingBehaviorParams":
        d = dict(d)
        for key in ("public", "residential"):
            if key in d and not isinstance(d[key], Thresholds):
                d[key] = Thresholds(**d[key])
        return cls(**d)


def destination_charge_probability(soc: float, thresholds: Thresholds) -> float:
    """Probability of starting a charge on arrival given SoC as a capacity fraction.

    1 at or below ``low``, 0 at or above ``high``, linear in between.
    """
    if not (thresholds.low < thresholds.high):
        raise ConfigurationError("low threshold must be below high threshold")
    if soc <= thresholds.low:
        return 1.0
    if soc >= thresholds.high:
        return 0.0
    return (thresholds.high - soc) / (thresholds.high - thresholds.low)


def should_charge_enroute(soc_kwh: float, remaining_km: float, consumption_kwh_per_km: float,
                          margin: float = 0.0) -> bool:
    """True when the battery cannot cover the remaining planned distance (plus margin)."""
    if remaining_km != remaining_km or remaining_km == float("inf"):
        raise SimulationError("remaining plan is not routable")
    return soc_kwh < remaining_km * consumption_kwh_per_km * (1.0 + margin)


def charge_session(soc_kwh: float, capacity_kwh: float, power_kw: float, dwell_s: float,
                   target_kwh: float) -> tuple[float, float]:
    """Constant-power charge. Returns (energy kWh, duration s).

    ``soc_kwh`` may be negative (a vehicle recovering from a deficit); the
    physical parameters may not.
    """
    if capacity_kwh < 0 or power_kw < 0 or dwell_s < 0 or target_kwh < 0:
        raise SimulationError("charging parameters must be non-negative")
    energy = min(target_kwh - soc_kwh, capacity_kwh - soc_kwh, power_kw * dwell_s / 3600.0)
    if energy <= 0 or power_kw == 0:
        return 0.0, 0.0
    return energy, energy / power_kw * 3600.0


def assign_required_charger_type(enroute: bool, needed_kwh: float = 0.0,
                                 dwell_s: float = 0.0) -> ChargerType:
    """DC for en-route events; slow AC if the dwell allows the full top-up, else 22 kW AC."""
    if enroute:
        return ChargerType.DC_150
    if ChargerType.AC_7_2.power_kw * dwell_s / 3600.0 >= needed_kwh:
        return ChargerType.AC_7_2
    return ChargerType.AC_22
