"""Operator, user and system KPIs plus charging-behaviour statistics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .cmclp import CostModel, deployment_cost
from .network import NetworkGraph
from .simulator import ChargingSession, Deployment, EventLog, Trip

REPORT_SCHEMA = "evdeploy.kpi"
REPORT_VERSION = 1


@dataclass(frozen=True)
class Rates:
    """Monetary rates: margins per type (AUD/kWh), value of time, operating cost, NSoC penalty."""

    margins: tuple[float, float, float] = (0.10, 0.10, 0.25)
    value_of_time: float = 30.0  # AUD/h
    operating_cost: float = 0.4  # AUD/km
    nsoc_penalty: float = 100.0  # AUD per affected vehicle
    circuity: float = 1.4  # road distance / straight-line baseline


def charging_revenue(sessions: Iterable[ChargingSession], margins: Sequence[float] = Rates().margins) -> float:
    """Margin earned on public sessions; home charging earns nothing."""
    return float(sum(s.energy_kwh * margins[s.charger_type.index] for s in sessions if s.tag != "residential"))


def _detour_rows(trips: Iterable[Trip], network: NetworkGraph, circuity: float):
    for t in trips:
        if not t.enroute_detour:
            continue
        euclid = float(np.hypot(*(network.xy[t.origin] - network.xy[t.destination])))
        baseline = circuity * euclid
        yield t, baseline, max(0.0, t.distance_km - baseline)


def detour_metrics(trips: Iterable[Trip], network: NetworkGraph, circuity: float = 1.4
                   ) -> tuple[float, float]:
    """(mean detour km per detouring vehicle, mean traveled/baseline ratio).

    The baseline of a trip is ``circuity`` times its straight-line OD
    distance; the detour is the excess of the distance actually driven,
    clamped at zero. With no en-route trips the result is ``(0.0, 1.0)``.
    """
    per_vehicle: dict[int, float] = {}
    ratios = []
    for t, baseline, detour in _detour_rows(trips, network, circuity):
        per_vehicle[t.vehicle_id] = per_vehicle.get(t.vehicle_id, 0.0) + detour
        if baseline > 0:
            ratios.append(t.distance_km / baseline)
    if not per_vehicle:
        return 0.0, 1.0
    return float(np.mean(list(per_vehicle.values()))), float(np.mean(ratios)) if ratios else 1.0


def detour_cost(detour_km, detour_time_s, operating_cost: float = 0.4, value_of_time: float = 30.0) -> float:
    """Operating cost of the extra distance plus value of the extra time (summed)."""
    km = np.sum(np.asarray(detour_km, dtype=float))
    hours = np.sum(np.asarray(detour_time_s, dtype=float)) / 3600.0
    return float(km * operating_cost + hours * value_of_time)


def detour_components(trips: Iterable[Trip], network: NetworkGraph, circuity: float = 1.4
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Per en-route trip: detour km and detour time s (detour driven at the trip's
    average speed, plus the time spent waiting for a plug)."""
    km, secs = [], []
    for t, _, detour in _detour_rows(trips, network, circuity):
        speed = t.distance_km / t.drive_s if t.drive_s > 0 else math.inf  # km/s
        km.append(detour)
        secs.append((detour / speed if speed > 0 and math.isfinite(speed) else 0.0) + t.wait_s)
    return np.asarray(km), np.asarray(secs)


def nsoc_count(log: EventLog) -> int:
    return len({e.vehicle_id for e in log.nsoc})


def system_costs(revenue: float, deploy_cost: float, detour: float, nsoc: int, penalty: float = 100.0
                 ) -> tuple[float, float, float]:
    """(operator net benefit, user generalized cost, system total cost)."""
    user = detour + penalty * nsoc
    return revenue - deploy_cost, user, deploy_cost + user


@dataclass(frozen=True)
class TagStats:
    count: int
    start_mean: float
    start_std: float
    duration_mean: float
    duration_std: float


def behavior_stats(sessions: Iterable[ChargingSession], tags: Optional[Sequence[str]] = None
                   ) -> dict[str, TagStats]:
    """Population mean / std of session start times and durations (seconds) per tag.

    Tags without sessions are absent from the result.
    """
    by_tag: dict[str, list[ChargingSession]] = {}
    for s in sessions:
        if tags is None or s.tag in tags:
            by_tag.setdefault(s.tag, []).append(s)
    out = {}
    for tag in sorted(by_tag):
        starts = np.array([s.start for s in by_tag[tag]])
        durs = np.array([s.end - s.start for s in by_tag[tag]])
        out[tag] = TagStats(len(starts), float(starts.mean()), float(starts.std()),
                            float(durs.mean()), float(durs.std()))
    return out


@dataclass(frozen=True)
class KpiReport:
    revenue: float
    deployment_cost: float
    detour_km_per_vehicle: float
    detour_ratio: float
    detour_cost: float
    nsoc_vehicles: int
    net_benefit: float
    user_cost: float
    system_cost: float
    label: str = ""
    regime: str = ""
    scenario_hash: str = ""
    deployment_hash: str = ""
    n_stations: int = 0
    chargers: tuple[int, int, int] = (0, 0, 0)
    behavior: Mapping[str, TagStats] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["chargers"] = list(self.chargers)
        d["behavior"] = {k: asdict(v) for k, v in self.behavior.items()}
        return {"schema": REPORT_SCHEMA, "version": REPORT_VERSION, **d}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "KpiReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"not a KPI report (schema={d.get('schema')!r})")
        d = {k: v for k, v in d.items() if k not in ("schema", "version")}
        d["chargers"] = tuple(d.get("chargers", (0, 0, 0)))
        d["behavior"] = {k: TagStats(**v) for k, v in d.get("behavior", {}).items()}
        return cls(**d)


def evaluate_kpis(log: EventLog, deployment: Deployment, network: NetworkGraph,
                  cost: CostModel = CostModel(), rates: Rates = Rates(), **labels) -> KpiReport:
    revenue = charging_revenue(log.sessions, rates.margins)
    dcost = deployment_cost(deployment, cost)
    per_vehicle, ratio = detour_metrics(log.trips, network, rates.circuity)
    km, secs = detour_components(log.trips, network, rates.circuity)
    dc = detour_cost(km, secs, rates.operating_cost, rates.value_of_time)
    nsoc = nsoc_count(log)
    net, user, total = system_costs(revenue, dcost, dc, nsoc, rates.nsoc_penalty)
    return KpiReport(revenue, dcost, per_vehicle, ratio, dc, nsoc, net, user, total,
                     n_stations=len(deployment), chargers=deployment.charger_totals(),
                     behavior=behavior_stats(log.sessions), **labels)


COMPARE_FIELDS = ("revenue", "deployment_cost", "detour_km_per_vehicle", "detour_ratio", "detour_cost",
                  "nsoc_vehicles", "net_benefit", "user_cost", "system_cost")


def relative_change(new: float, old: float) -> float:
    """(new - old) / old; NaN when the reference is zero."""
    return (new - old) / old if old else math.nan


def comparison_table(reports: Mapping[str, KpiReport]) -> str:
    """CSV with one row per labelled report, in the order given.

    A ``REF-x`` row whose ``CMCLP-x`` partner is present gets percentage
    change columns relative to that partner.
    """
    hashes = {r.scenario_hash for r in reports.values()}
    if len(hashes) > 1:
        raise ValueError(f"reports come from different scenarios: {sorted(hashes)}")
    paired = any(label.startswith("REF-") and "CMCLP-" + label[4:] in reports for label in reports)
    header = ["label", "stations", "n_7_2", "n_22", "n_150", *COMPARE_FIELDS]
    if paired:
        header += [f"{f}_change_pct" for f in COMPARE_FIELDS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for label, r in reports.items():
        row = [label, r.n_stations, *r.chargers, *(f"{getattr(r, f):.6g}" for f in COMPARE_FIELDS)]
        if paired:
            base = reports.get("CMCLP-" + label[4:]) if label.startswith("REF-") else None
            row += [f"{100 * relative_change(getattr(r, f), getattr(base, f)):.2f}" if base else ""
                    for f in COMPARE_FIELDS]
        w.writerow(row)
    return buf.getvalue()
