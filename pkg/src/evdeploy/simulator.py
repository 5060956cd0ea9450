"""Agent-based day simulation of EV activity plans with endogenous charging.

Two modes:

* ``Mode.LATENT`` -- public charging is always available where it is wanted
  (unlimited plugs at TAZ level), and every public charge is also logged as
  a :class:`LatentDemandEvent`;
* ``Mode.EVALUATION`` -- vehicles compete for the finite plugs of a
  :class:`Deployment`.

Regimes gate which triggers are active: destination charging on arrival
(probabilistic in SoC), en-route fast charging before departure (need
driven), or both. Residential charging at home applies in every regime.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import math
from bisect import insort
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .charging import (AC_TYPES, CHARGER_TYPES, ChargerType, ChargingBehaviorParams, SimulationError,
                       assign_required_charger_type, charge_session, destination_charge_probability,
                       should_charge_enroute)
from .network import NetworkGraph
from .scenario import DAY_S, ScenarioBundle

EVENTLOG_VERSION = 1


class Regime(str, enum.Enum):
    DESTINATION = "destination"
    ENROUTE = "enroute"
    COMBINED = "combined"

    @property
    def destination(self) -> bool:
        return self is not Regime.ENROUTE

    @property
    def enroute(self) -> bool:
        return self is not Regime.DESTINATION


class Mode(str, enum.Enum):
    LATENT = "latent"
    EVALUATION = "evaluation"


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class Station:
    """A charging station at a network node with per-type charger counts."""

    id: int
    node: int
    x: float
    y: float
    counts: tuple[int, int, int]  # AC_7_2, AC_22, DC_150

    def __post_init__(self):
        if len(self.counts) != 3 or any(int(c) != c or c < 0 for c in self.counts):
            raise ValueError(f"station {self.id}: counts must be three non-negative integers")
        if sum(self.counts) == 0:
            raise ValueError(f"station {self.id}: at least one charger required")

    @property
    def has_dc(self) -> bool:
        return self.counts[2] >= 1

    @property
    def total(self) -> int:
        return sum(self.counts)

    def count(self, ctype: ChargerType) -> int:
        return self.counts[ctype.index]


@dataclass(frozen=True)
class Deployment:
    stations: tuple[Station, ...] = ()

    def __post_init__(self):
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ValueError("station ids must be unique")
        object.__setattr__(self, "stations", tuple(sorted(self.stations, key=lambda s: s.id)))

    def __len__(self) -> int:
        return len(self.stations)

    def by_id(self) -> dict[int, Station]:
        return {s.id: s for s in self.stations}

    def charger_totals(self) -> tuple[int, int, int]:
        return tuple(int(sum(s.counts[k] for s in self.stations)) for k in range(3))

    def validate(self, network: NetworkGraph) -> None:
        for s in self.stations:
            if not 0 <= s.node < network.n_nodes:
                raise ValueError(f"station {s.id} references unknown node {s.node}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "x_km", "y_km", "n_7_2", "n_22", "n_150"])
        for s in self.stations:
            w.writerow([s.id, repr(float(s.x)), repr(float(s.y)), *s.counts])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, network: NetworkGraph) -> "Deployment":
        rows = list(csv.DictReader(io.StringIO(text)))
        stations = []
        for r in rows:
            x, y = float(r["x_km"]), float(r["y_km"])
            stations.append(Station(int(r["id"]), network.node_at(x, y), x, y,
                                    (int(r["n_7_2"]), int(r["n_22"]), int(r["n_150"]))))
        return cls(tuple(stations))

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path, network: NetworkGraph) -> "Deployment":
        return cls.from_csv(Path(path).read_text(), network)


@dataclass(frozen=True)
class ChargingSession:
    id: int
    vehicle_id: int
    station_id: Optional[int]  # None for home and latent-mode charging
    charger_type: ChargerType
    start: float
    end: float
    energy_kwh: float
    tag: str  # destination | enroute | residential


@dataclass(frozen=True)
class LatentDemandEvent:
    id: int
    vehicle_id: int
    node: int
    x: float
    y: float
    start: float
    end: float
    energy_kwh: float
    charger_type: ChargerType
    tag: str


@dataclass(frozen=True)
class Trip:
    vehicle_id: int
    origin: int
    destination: int
    depart: float
    arrive: float
    distance_km: float
    direct_km: float
    enroute_detour: bool = False
    station_id: Optional[int] = None
    extra_time_s: float = 0.0
    wait_s: float = 0.0
    drive_s: float = 0.0


@dataclass(frozen=True)
class NsocEvent:
    vehicle_id: int
    time: float
    deficit_kwh: float


@dataclass(frozen=True)
class VehicleEnergy:
    vehicle_id: int
    initial_kwh: float
    final_kwh: float
    distance_km: float
    consumption_kwh_per_km: float


@dataclass(frozen=True)
class EventLog:
    regime: Regime
    mode: Mode
    trips: tuple[Trip, ...] = ()
    sessions: tuple[ChargingSession, ...] = ()
    latent: tuple[LatentDemandEvent, ...] = ()
    nsoc: tuple[NsocEvent, ...] = ()
    energy: tuple[VehicleEnergy, ...] = ()
    failed_enroute: int = 0

    def public_sessions(self) -> list[ChargingSession]:
        return [s for s in self.sessions if s.tag != "residential"]

    def tables(self) -> dict[str, str]:
        """CSV text of the exported tables keyed by file name."""
        return {
            "trips.csv": _csv(
                ["vehicle_id", "origin", "destination", "depart_s", "arrive_s", "distance_km",
                 "direct_km", "enroute_detour", "station_id", "extra_time_s", "wait_s", "drive_s"],
                [[t.vehicle_id, t.origin, t.destination, _f(t.depart), _f(t.arrive), _f(t.distance_km),
                  _f(t.direct_km), int(t.enroute_detour), _opt(t.station_id), _f(t.extra_time_s),
                  _f(t.wait_s), _f(t.drive_s)] for t in self.trips]),
            "sessions.csv": _csv(
                ["session_id", "vehicle_id", "station_id", "charger_type", "start_s", "end_s",
                 "energy_kwh", "tag"],
                [[s.id, s.vehicle_id, _opt(s.station_id), s.charger_type.value, _f(s.start), _f(s.end),
                  _f(s.energy_kwh), s.tag] for s in self.sessions]),
            "latent_demand.csv": _csv(
                ["event_id", "vehicle_id", "node", "x_km", "y_km", "start_s", "end_s", "energy_kwh",
                 "charger_type", "tag"],
                [[e.id, e.vehicle_id, e.node, _f(e.x), _f(e.y), _f(e.start), _f(e.end), _f(e.energy_kwh),
                  e.charger_type.value, e.tag] for e in self.latent]),
            "nsoc_events.csv": _csv(
                ["vehicle_id", "time_s", "deficit_kwh"],
                [[n.vehicle_id, _f(n.time), _f(n.deficit_kwh)] for n in self.nsoc]),
        }

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, text in self.tables().items():
            (directory / name).write_text(text)


def _f(x: float) -> str:
    return repr(float(x))


def _opt(x) -> str:
    return "" if x is None else str(x)


def _csv(header: list[str], rows: Iterable[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def read_latent_events(text: str) -> list[LatentDemandEvent]:
    return [LatentDemandEvent(int(r["event_id"]), int(r["vehicle_id"]), int(r["node"]), float(r["x_km"]),
                              float(r["y_km"]), float(r["start_s"]), float(r["end_s"]),
                              float(r["energy_kwh"]), ChargerType(r["charger_type"]), r["tag"])
            for r in csv.DictReader(io.StringIO(text))]


def read_sessions(text: str) -> list[ChargingSession]:
    return [ChargingSession(int(r["session_id"]), int(r["vehicle_id"]),
                            int(r["station_id"]) if r["station_id"] else None,
                            ChargerType(r["charger_type"]), float(r["start_s"]), float(r["end_s"]),
                            float(r["energy_kwh"]), r["tag"])
            for r in csv.DictReader(io.StringIO(text))]


class PlugBook:
    """Per-plug reservation intervals ``[start, end)`` for one deployment."""

    def __init__(self, deployment: Deployment):
        self._plugs: dict[tuple[int, ChargerType], list[list[tuple[float, float]]]] = {
            (s.id, t): [[] for _ in range(s.count(t))] for s in deployment.stations for t in CHARGER_TYPES
        }

    def free_plug(self, station_id: int, ctype: ChargerType, start: float, end: float) -> Optional[int]:
        for k, booked in enumerate(self._plugs.get((station_id, ctype), ())):
            if all(e <= start or s >= end for s, e in booked):
                return k
        return None

    def earliest_fit(self, station_id: int, ctype: ChargerType, ready: float, duration: float
                     ) -> Optional[tuple[int, float]]:
        best = None
        for k, booked in enumerate(self._plugs.get((station_id, ctype), ())):
            t = ready
            for s, e in booked:
                if e <= t:
                    continue
                if s >= t + duration:
                    break
                t = e
            if best is None or t < best[1]:
                best = (k, t)
        return best

    def book(self, station_id: int, ctype: ChargerType, plug: int, start: float, end: float) -> None:
        insort(self._plugs[(station_id, ctype)][plug], (start, end))


def find_destination_charger(xy: Sequence[float], deployment: Deployment, types: Sequence[ChargerType],
                             start: float, duration_for: Callable[[ChargerType], float],
                             book: Optional[PlugBook] = None, radius_km: float = 1.0
                             ) -> Optional[tuple[Station, ChargerType, int]]:
    """Nearest station within ``radius_km`` with a plug of one of ``types`` free
    for the whole session. ``types`` is in preference order; distance ties go
    to the smaller station id. Returns (station, type, plug index) or None.
    """
    x, y = xy
    near = []
    for s in deployment.stations:
        d = math.hypot(s.x - x, s.y - y)
        if d <= radius_km + 1e-9:
            near.append((d, s.id, s))
    near.sort(key=lambda t: (t[0], t[1]))
    for _, _, s in near:
        for t in types:
            if s.count(t) == 0:
                continue
            dur = duration_for(t)
            plug = 0 if book is None else book.free_plug(s.id, t, start, start + dur)
            if plug is not None:
                return s, t, plug
    return None


def find_enroute_charger(origin: int, destination: int, deployment: Deployment, time: float,
                         network: NetworkGraph, duration_for: Callable[[Station], float],
                         book: Optional[PlugBook] = None, max_wait_s: float = 3600.0
                         ) -> Optional[tuple[Station, float, int, float]]:
    """DC station minimising the added network distance origin -> station -> destination.

    Only stations where a DC plug can start within ``max_wait_s`` of arrival
    are eligible. Returns (station, detour km, plug index, charge start) or None.
    """
    D = network.distance_matrix
    T = network.time_matrix
    direct = D[origin, destination]
    best = None
    for s in deployment.stations:
        if not s.has_dc:
            continue
        detour = max(0.0, D[origin, s.node] + D[s.node, destination] - direct)
        arrive = time + T[origin, s.node]
        if book is None:
            slot = (0, arrive)
        else:
            slot = book.earliest_fit(s.id, ChargerType.DC_150, arrive, duration_for(s))
        if slot is None or slot[1] - arrive > max_wait_s:
            continue
        key = (round(detour, 9), s.id)
        if best is None or key < best[0]:
            best = (key, s, detour, slot)
    if best is None:
        return None
    _, s, detour, (plug, start) = best
    return s, detour, plug, start


def _uniform(seed: int, vehicle_id: int, counter: int, purpose: int) -> float:
    # counter-based stream: a draw depends only on (seed, vehicle, counter, purpose)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(vehicle_id, counter, purpose))
    return float(ss.generate_state(1, np.uint64)[0]) / 2.0 ** 64


@dataclass
class _Vehicle:
    id: int
    plan: object
    capacity: float
    rate: float
    soc: float
    initial: float
    home_charger: bool
    remaining_km: list[float] = field(default_factory=list)
    distance: float = 0.0


def simulate_day(scenario: ScenarioBundle, regime: Regime | str, mode: Mode | str = Mode.LATENT,
                 deployment: Optional[Deployment] = None, params: Optional[ChargingBehaviorParams] = None,
                 seed: int = 0) -> EventLog:
    """Run every EV's activity plan over one day and return the event log."""
    regime = Regime(regime)
    mode = Mode(mode)
    params = params or scenario.behavior
    if mode is Mode.EVALUATION:
        if deployment is None:
            raise UsageError("evaluation mode requires a deployment")
        deployment.validate(scenario.network)
    else:
        deployment = None
    return _DaySim(scenario, regime, mode, deployment, params, seed).run()


class _DaySim:
    def __init__(self, scenario, regime, mode, deployment, params, seed):
        self.sc = scenario
        self.net = scenario.network
        self.D = self.net.distance_matrix
        self.T = self.net.time_matrix
        self.regime = regime
        self.latent_mode = mode is Mode.LATENT
        self.mode = mode
        self.deployment = deployment
        self.book = PlugBook(deployment) if deployment is not None else None
        self.params = params
        self.seed = seed
        self.trips: list[Trip] = []
        self.sessions: list[ChargingSession] = []
        self.latent: list[LatentDemandEvent] = []
        self.nsoc: list[NsocEvent] = []
        self.failed_enroute = 0
        self.centroid = np.arange(self.net.n_nodes)
        for z in scenario.tazs:
            self.centroid[list(z.nodes)] = z.centroid

    def run(self) -> EventLog:
        households = {h.id: h for h in self.sc.households}
        plans = {p.vehicle_id: p for p in self.sc.plans}
        vehicles = []
        queue = []
        for vspec in self.sc.vehicles:
            if not vspec.is_ev:
                continue
            plan = plans[vspec.id]
            acts = plan.activities
            legs = [self.D[a.node, b.node] for a, b in zip(acts, acts[1:])]
            if not all(math.isfinite(x) for x in legs):
                raise SimulationError(f"plan of vehicle {vspec.id} is not routable")
            remaining = list(np.cumsum(legs[::-1])[::-1]) + [0.0]
            soc = vspec.initial_soc * vspec.capacity_kwh
            v = _Vehicle(vspec.id, plan, vspec.capacity_kwh, vspec.consumption_kwh_per_km, soc, soc,
                         households[plan.household_id].home_charger, remaining)
            vehicles.append(v)
            if len(acts) > 1:
                heapq.heappush(queue, (acts[0].end, vspec.id, 0, "depart", v))
        while queue:
            t, _, j, kind, v = heapq.heappop(queue)
            if kind == "depart":
                t_arr = self._depart(v, j, t)
                heapq.heappush(queue, (t_arr, v.id, j + 1, "arrive", v))
            else:
                t_dep = self._arrive(v, j, t)
                if t_dep is not None:
                    heapq.heappush(queue, (t_dep, v.id, j, "depart", v))
        energy = tuple(VehicleEnergy(v.id, v.initial, v.soc, v.distance, v.rate) for v in vehicles)
        return EventLog(self.regime, self.mode, tuple(self.trips), tuple(self.sessions),
                        tuple(self.latent), tuple(self.nsoc), energy, self.failed_enroute)

    # -- helpers ---------------------------------------------------------

    def _session(self, v, station_id, ctype, start, duration, energy, tag):
        s = ChargingSession(len(self.sessions), v.id, station_id, ctype, start, start + duration, energy, tag)
        self.sessions.append(s)
        v.soc += energy
        return s

    def _latent(self, v, node, ctype, start, duration, energy, tag):
        x, y = self.net.xy[node]
        self.latent.append(LatentDemandEvent(len(self.latent), v.id, node, float(x), float(y), start,
                                             start + duration, energy, ctype, tag))

    def _drive(self, v, km, arrive):
        v.soc -= km * v.rate
        v.distance += km
        if v.soc < 0:
            self.nsoc.append(NsocEvent(v.id, arrive, -v.soc))

    # -- arrival: residential / destination charging ----------------------

    def _arrive(self, v, j, t):
        acts = v.plan.activities
        act = acts[j]
        last = j == len(acts) - 1
        t_dep = None if last else max(act.end, t)
        dwell = max(0.0, min(DAY_S if last else t_dep, DAY_S) - t)
        if dwell <= 0 or t >= DAY_S:
            return t_dep
        frac = v.soc / v.capacity
        if act.kind == "home" and v.home_charger:
            if _uniform(self.seed, v.id, j, 0) < destination_charge_probability(frac, self.params.residential):
                e, d = charge_session(v.soc, v.capacity, ChargerType.AC_7_2.power_kw, dwell, v.capacity)
                if e > 0:
                    self._session(v, None, ChargerType.AC_7_2, t, d, e, "residential")
            return t_dep
        if not self.regime.destination:
            return t_dep
        if _uniform(self.seed, v.id, j, 1) >= destination_charge_probability(frac, self.params.public):
            return t_dep
        target = self.params.public.high * v.capacity  # stop where a fresh arrival would not start
        need = max(0.0, target - v.soc)
        required = assign_required_charger_type(False, need, dwell)
        if self.latent_mode:
            e, d = charge_session(v.soc, v.capacity, required.power_kw, dwell, target)
            if e > 0:
                self._latent(v, int(self.centroid[act.node]), required, t, d, e, "destination")
                self._session(v, None, required, t, d, e, "destination")
            return t_dep
        others = [c for c in AC_TYPES if c is not required]
        found = find_destination_charger(
            self.net.xy[act.node], self.deployment, [required, *others], t,
            lambda c: charge_session(v.soc, v.capacity, c.power_kw, dwell, target)[1],
            self.book, self.params.service_radius_km)
        if found is not None:
            station, ctype, plug = found
            e, d = charge_session(v.soc, v.capacity, ctype.power_kw, dwell, target)
            if e > 0:
                self.book.book(station.id, ctype, plug, t, t + d)
                self._session(v, station.id, ctype, t, d, e, "destination")
        return t_dep

    # -- departure: en-route check and the trip itself --------------------

    def _depart(self, v, j, t):
        acts = v.plan.activities
        o, dst = acts[j].node, acts[j + 1].node
        direct = float(self.D[o, dst])
        tt = float(self.T[o, dst])
        if (self.regime.enroute and t < DAY_S
                and should_charge_enroute(v.soc, v.remaining_km[j], v.rate, self.params.enroute_margin)):
            if self.latent_mode:
                return self._enroute_latent(v, j, t, o, dst, direct, tt)
            arrival = self._enroute_eval(v, j, t, o, dst, direct, tt)
            if arrival is not None:
                return arrival
            self.failed_enroute += 1
        self._drive(v, direct, t + tt)
        self.trips.append(Trip(v.id, o, dst, t, t + tt, direct, direct, drive_s=tt))
        return t + tt

    def _enroute_target(self, v, remaining_km):
        return min(v.capacity, remaining_km * v.rate * (1.0 + self.params.enroute_buffer))

    def _enroute_latent(self, v, j, t, o, dst, direct, tt):
        target = self._enroute_target(v, v.remaining_km[j])
        e, d = charge_session(v.soc, v.capacity, ChargerType.DC_150.power_kw, DAY_S - t, target)
        if e > 0:
            self._latent(v, o, ChargerType.DC_150, t, d, e, "enroute")
            self._session(v, None, ChargerType.DC_150, t, d, e, "enroute")
        t_leave = t + d
        self._drive(v, direct, t_leave + tt)
        self.trips.append(Trip(v.id, o, dst, t, t_leave + tt, direct, direct, True, None, 0.0, 0.0, tt))
        return t_leave + tt

    def _enroute_eval(self, v, j, t, o, dst, direct, tt):
        rest_km = v.remaining_km[j] - direct

        def plan_charge(station):
            soc_at = v.soc - self.D[o, station.node] * v.rate
            target = self._enroute_target(v, self.D[station.node, dst] + rest_km)
            return soc_at, target

        def duration_for(station):
            soc_at, target = plan_charge(station)
            return charge_session(soc_at, v.capacity, ChargerType.DC_150.power_kw, DAY_S, target)[1]

        found = find_enroute_charger(o, dst, self.deployment, t, self.net, duration_for, self.book,
                                     self.params.max_wait_s)
        if found is None:
            return None
        station, _, plug, start = found
        s_node = station.node
        arrive_station = t + float(self.T[o, s_node])
        if start >= DAY_S:
            return None
        leg1 = float(self.D[o, s_node])
        leg2 = float(self.D[s_node, dst])
        _, target = plan_charge(station)
        self._drive(v, leg1, arrive_station)
        e, d = charge_session(v.soc, v.capacity, ChargerType.DC_150.power_kw, DAY_S - start, target)
        if e > 0:
            self.book.book(station.id, ChargerType.DC_150, plug, start, start + d)
            self._session(v, station.id, ChargerType.DC_150, start, d, e, "enroute")
        leave = start + d
        arrive = leave + float(self.T[s_node, dst])
        self._drive(v, leg2, arrive)
        extra = float(self.T[o, s_node] + self.T[s_node, dst]) - tt
        self.trips.append(Trip(v.id, o, dst, t, arrive, leg1 + leg2, direct, True, station.id,
                               extra, start - arrive_station, tt + extra))
        return arrive
