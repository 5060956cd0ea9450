"""Utilization-driven refinement of a deployment using simulated charging sessions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np

from .charging import CHARGER_TYPES, ChargerType, ChargingBehaviorParams
from .cmclp import CostModel
from .metrics import KpiReport, Rates, evaluate_kpis
from .scenario import DAY_S, ScenarioBundle
from .simulator import ChargingSession, Deployment, Mode, Regime, simulate_day


class ConsistencyError(ValueError):
    """Sessions do not match the deployment they were simulated under."""


@dataclass(frozen=True)
class UtilEntry:
    energy_kwh: float
    capacity_kwh: float
    utilization: float
    flh_h: float


@dataclass(frozen=True)
class UtilizationReport:
    horizon_h: float
    entries: dict[tuple[int, ChargerType], UtilEntry]

    def get(self, station_id: int, ctype: ChargerType) -> Optional[UtilEntry]:
        return self.entries.get((station_id, ctype))


@dataclass(frozen=True)
class RefineConfig:
    flh_increment_h: float = 2.0
    util_decrement: float = 0.05
    n_min: int = 0
    n_max: int = 10
    station_min: int = 1
    stop_after: int = 2
    max_iterations: int = 50
    reseed_per_iteration: bool = False

    def __post_init__(self):
        if not 0.0 < self.util_decrement < 1.0:
            raise ValueError("util_decrement must lie in (0, 1)")
        if not 0.0 < self.flh_increment_h <= 24.0:
            raise ValueError("flh_increment_h must lie in (0, 24]")
        if self.n_min < 0 or self.n_min > self.n_max:
            raise ValueError("need 0 <= n_min <= n_max")
        if self.stop_after < 1 or self.max_iterations < 1:
            raise ValueError("stop_after and max_iterations must be >= 1")


def _public_sessions(sessions: Iterable[ChargingSession], deployment: Deployment):
    stations = deployment.by_id()
    for s in sessions:
        if s.station_id is None:
            continue
        st = stations.get(s.station_id)
        if st is None or st.count(s.charger_type) == 0:
            raise ConsistencyError(
                f"session {s.id} uses {s.charger_type.value} at station {s.station_id}, absent from deployment")
        yield s


def compute_flh(sessions: Iterable[ChargingSession], deployment: Deployment, horizon_s: float = DAY_S
                ) -> dict[tuple[int, ChargerType], float]:
    """Hours during which every charger of a type at a station is busy (sweep line)."""
    intervals: dict[tuple[int, ChargerType], list[tuple[float, float]]] = {}
    for s in _public_sessions(sessions, deployment):
        a, b = max(0.0, s.start), min(horizon_s, s.end)
        if b > a:
            intervals.setdefault((s.station_id, s.charger_type), []).append((a, b))
    out = {}
    for st in deployment.stations:
        for t in CHARGER_TYPES:
            n = st.count(t)
            if n == 0:
                continue
            events = []
            for a, b in intervals.get((st.id, t), ()):
                events.append((a, 1))
                events.append((b, -1))
            events.sort()  # at equal times ends (-1) sort before starts (+1)
            busy, level, last = 0.0, 0, 0.0
            for when, step in events:
                if level == n:
                    busy += when - last
                level += step
                last = when
                if level > n:
                    raise ConsistencyError(f"{level} concurrent {t.value} sessions at station {st.id} "
                                           f"with {n} chargers")
            out[(st.id, t)] = busy / 3600.0
    return out


def compute_utilization(sessions: Iterable[ChargingSession], deployment: Deployment,
                        horizon_h: float = 24.0) -> UtilizationReport:
    """Delivered energy over theoretical capacity ``n * P * T`` per (station, type)."""
    sessions = list(sessions)
    energy: dict[tuple[int, ChargerType], float] = {}
    for s in _public_sessions(sessions, deployment):
        key = (s.station_id, s.charger_type)
        energy[key] = energy.get(key, 0.0) + s.energy_kwh
    flh = compute_flh(sessions, deployment, horizon_h * 3600.0)
    entries = {}
    for st in deployment.stations:
        for t in CHARGER_TYPES:
            n = st.count(t)
            if n == 0:
                continue
            cap = n * t.power_kw * horizon_h
            e = energy.get((st.id, t), 0.0)
            entries[(st.id, t)] = UtilEntry(e, cap, e / cap, flh[(st.id, t)])
    return UtilizationReport(horizon_h, entries)


def refine_step(deployment: Deployment, report: UtilizationReport, config: RefineConfig = RefineConfig()
                ) -> Deployment:
    """One pass of the add / remove rules over stations (ascending id) and types.

    Add a charger where all chargers of the type were busy for at least
    ``flh_increment_h`` and the station is below ``n_max``; otherwise remove
    one where utilization is below ``util_decrement`` and the count exceeds
    ``n_min``. Stations left with fewer than ``station_min`` chargers close.
    """
    stations = []
    for st in deployment.stations:
        counts = list(st.counts)
        total = sum(counts)
        for t in CHARGER_TYPES:
            k = t.index
            entry = report.get(st.id, t)
            if counts[k] == 0 or entry is None:
                continue
            if entry.flh_h >= config.flh_increment_h and total < config.n_max:
                counts[k] += 1
                total += 1
            elif entry.utilization < config.util_decrement and counts[k] > config.n_min:
                counts[k] -= 1
                total -= 1
        if total < config.station_min or total == 0:
            continue
        stations.append(replace(st, counts=tuple(counts)))
    return Deployment(tuple(stations))


@dataclass(frozen=True)
class RefineIteration:
    iteration: int
    deployment: Deployment
    utilization: UtilizationReport
    changes: int
    kpi: KpiReport


@dataclass(frozen=True)
class RefineTrace:
    iterations: tuple[RefineIteration, ...]
    final: Deployment
    final_kpi: KpiReport
    converged: bool

    @property
    def objective(self) -> float:
        return self.final_kpi.system_cost

    def table(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "stations", "n_7_2", "n_22", "n_150", "changes", "cost", "objective"])
        for it in self.iterations:
            w.writerow([it.iteration, len(it.deployment), *it.deployment.charger_totals(), it.changes,
                        f"{it.kpi.deployment_cost:.2f}", f"{it.kpi.system_cost:.2f}"])
        w.writerow(["final", len(self.final), *self.final.charger_totals(), "",
                    f"{self.final_kpi.deployment_cost:.2f}", f"{self.final_kpi.system_cost:.2f}"])
        return buf.getvalue()


def _changes(a: Deployment, b: Deployment) -> int:
    ca = {s.id: np.array(s.counts) for s in a.stations}
    cb = {s.id: np.array(s.counts) for s in b.stations}
    zero = np.zeros(3, dtype=int)
    return int(sum(np.abs(ca.get(i, zero) - cb.get(i, zero)).sum() for i in set(ca) | set(cb)))


def refine_loop(scenario: ScenarioBundle, regime: Regime | str, initial: Deployment,
                params: Optional[ChargingBehaviorParams] = None, config: RefineConfig = RefineConfig(),
                seed: int = 0, cost: CostModel = CostModel(), rates: Rates = Rates()
                ) -> tuple[Deployment, RefineTrace]:
    """Alternate evaluation runs and :func:`refine_step` until the deployment is
    unchanged for ``stop_after`` consecutive iterations, then evaluate once more.

    If ``max_iterations`` is hit first, the lowest-system-cost deployment seen
    is returned and the trace is marked not converged.
    """
    regime = Regime(regime)
    params = params or scenario.behavior
    current = initial
    unchanged = 0
    records = []
    converged = False

    def run(dep: Deployment, it: int):
        s = seed + 1_000_003 * it if config.reseed_per_iteration else seed
        log = simulate_day(scenario, regime, Mode.EVALUATION, dep, params, s)
        return log, evaluate_kpis(log, dep, scenario.network, cost, rates, regime=regime.value,
                                  scenario_hash=scenario.content_hash())

    for it in range(config.max_iterations):
        log, kpi = run(current, it)
        report = compute_utilization(log.sessions, current)
        nxt = refine_step(current, report, config)
        changes = _changes(current, nxt)
        records.append(RefineIteration(it, current, report, changes, kpi))
        unchanged = unchanged + 1 if changes == 0 else 0
        current = nxt
        if unchanged >= config.stop_after:
            converged = True
            break

    if not converged:
        best = min(records, key=lambda r: (r.kpi.system_cost, r.iteration))
        current = best.deployment
    _, final_kpi = run(current, len(records))
    return current, RefineTrace(tuple(records), current, final_kpi, converged)
