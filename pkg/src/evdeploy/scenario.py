"""Synthetic grid-city scenarios: network, TAZs, households, activity plans, fleet."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .charging import ChargingBehaviorParams
from .network import ConfigurationError, NetworkGraph, grid_network

SCENARIO_SCHEMA = "evdeploy.scenario"
SCENARIO_VERSION = 1
DAY_S = 86400.0

ACTIVITY_KINDS = ("home", "work", "shop", "other")

# template name -> activity kinds; first and last are always home
PLAN_TEMPLATES = {
    "work": ("home", "work", "home"),
    "work_shop": ("home", "work", "shop", "home"),
    "other": ("home", "other", "home"),
    "work_other": ("home", "work", "other", "home"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 42
    grid_rows: int = 10
    grid_cols: int = 10
    spacing_km: float = 1.0
    speed_kmh: float = 40.0
    link_length_jitter: float = 0.0
    taz_block: int = 2
    n_households: int = 2000
    vehicle_household_share: float = 1.0
    ev_penetration: float = 0.05
    home_charger_share: float = 0.60
    max_households_per_node: int = 100
    battery_kwh: float = 64.0
    consumption_kwh_per_km: float = 0.16
    initial_soc: float = 1.0
    initial_soc_spread: float = 0.0
    template_weights: tuple = (("work", 0.5), ("work_shop", 0.2), ("other", 0.2), ("work_other", 0.1))
    work_centrality_km: float = 3.0
    shop_radius_km: float = 2.0
    depart_mean_h: float = 8.0
    depart_std_h: float = 1.0
    work_mean_h: float = 8.0
    work_std_h: float = 1.0
    behavior: ChargingBehaviorParams = field(default_factory=ChargingBehaviorParams)

    def validate(self) -> None:
        if self.grid_rows < 2 or self.grid_cols < 2:
            raise ConfigurationError(f"grid must be at least 2x2, got {self.grid_rows}x{self.grid_cols}")
        if self.n_households <= 0 or self.taz_block <= 0 or self.max_households_per_node <= 0:
            raise ConfigurationError("counts must be positive")
        for name in ("vehicle_household_share", "ev_penetration", "home_charger_share", "initial_soc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")
        if self.battery_kwh <= 0 or self.consumption_kwh_per_km <= 0:
            raise ConfigurationError("battery capacity and consumption rate must be positive")
        if self.initial_soc_spread < 0:
            raise ConfigurationError("initial_soc_spread must be >= 0")
        names = [name for name, _ in self.template_weights]
        if not names or any(name not in PLAN_TEMPLATES for name in names):
            raise ConfigurationError(f"unknown plan template in {names}")
        if any(w < 0 for _, w in self.template_weights) or sum(w for _, w in self.template_weights) <= 0:
            raise ConfigurationError("template weights must be non-negative with a positive sum")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["template_weights"] = [list(t) for t in self.template_weights]
        d["behavior"] = self.behavior.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown scenario config keys: {sorted(unknown)}")
        if "template_weights" in d:
            d["template_weights"] = tuple((str(n), float(w)) for n, w in d["template_weights"])
        if "behavior" in d and not isinstance(d["behavior"], ChargingBehaviorParams):
            d["behavior"] = ChargingBehaviorParams.from_dict(d["behavior"])
        return cls(**d)


@dataclass(frozen=True)
class Taz:
    id: int
    centroid: int
    nodes: tuple[int, ...]


@dataclass(frozen=True)
class Activity:
    kind: str
    node: int
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class ActivityPlan:
    vehicle_id: int
    household_id: int
    activities: tuple[Activity, ...]

    def validate(self) -> None:
        acts = self.activities
        if len(acts) < 2 or acts[0].kind != "home" or acts[-1].kind != "home":
            raise ConfigurationError(f"plan {self.vehicle_id} must start and end at home")
        if acts[0].node != acts[-1].node:
            raise ConfigurationError(f"plan {self.vehicle_id} must return to the same home node")
        prev = 0.0
        for a in acts:
            if a.kind not in ACTIVITY_KINDS:
                raise ConfigurationError(f"unknown activity kind {a.kind!r}")
            if a.duration < 0 or a.start < prev - 1e-9 or a.end > DAY_S + 1e-9:
                raise ConfigurationError(f"plan {self.vehicle_id} has inconsistent times")
            prev = a.end  # activities may not overlap

    def trips(self) -> list[tuple[int, int]]:
        return [(a.node, b.node) for a, b in zip(self.activities, self.activities[1:])]


@dataclass(frozen=True)
class Household:
    id: int
    home_node: int
    has_vehicle: bool
    owns_ev: bool
    home_charger: bool

    def __post_init__(self):
        if self.home_charger and not self.owns_ev:
            raise ConfigurationError(f"household {self.id}: home charger without an EV")
        if self.owns_ev and not self.has_vehicle:
            raise ConfigurationError(f"household {self.id}: EV without a vehicle")


@dataclass(frozen=True)
class VehicleSpec:
    id: int
    household_id: int
    is_ev: bool
    capacity_kwh: float = 64.0
    consumption_kwh_per_km: float = 0.16
    initial_soc: float = 1.0

    def __post_init__(self):
        if self.capacity_kwh <= 0 or self.consumption_kwh_per_km <= 0:
            raise ConfigurationError("capacity and consumption must be positive")
        if not 0.0 <= self.initial_soc <= 1.0:
            raise ConfigurationError("initial SoC must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class ScenarioBundle:
    config: ScenarioConfig
    network: NetworkGraph
    tazs: tuple[Taz, ...]
    households: tuple[Household, ...]
    plans: tuple[ActivityPlan, ...]
    vehicles: tuple[VehicleSpec, ...]

    @property
    def behavior(self) -> ChargingBehaviorParams:
        return self.config.behavior

    def ev_ids(self) -> list[int]:
        return [v.id for v in self.vehicles if v.is_ev]

    def to_dict(self) -> dict:
        return {
            "schema": SCENARIO_SCHEMA,
            "version": SCENARIO_VERSION,
            "config": self.config.to_dict(),
            "network": self.network.to_dict(),
            "tazs": [[t.id, t.centroid, list(t.nodes)] for t in self.tazs],
            "households": [[h.id, h.home_node, h.has_vehicle, h.owns_ev, h.home_charger]
                           for h in self.households],
            "plans": [[p.vehicle_id, p.household_id,
                       [[a.kind, a.node, a.start, a.duration] for a in p.activities]]
                      for p in self.plans],
            "vehicles": [[v.id, v.household_id, v.is_ev, v.capacity_kwh,
                          v.consumption_kwh_per_km, v.initial_soc] for v in self.vehicles],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioBundle":
        if d.get("schema") != SCENARIO_SCHEMA:
            raise ValueError(f"not a scenario file (schema={d.get('schema')!r})")
        if d.get("version") != SCENARIO_VERSION:
            raise ValueError(f"unsupported scenario schema version {d.get('version')}")
        return cls(
            config=ScenarioConfig.from_dict(d["config"]),
            network=NetworkGraph.from_dict(d["network"]),
            tazs=tuple(Taz(i, c, tuple(nodes)) for i, c, nodes in d["tazs"]),
            households=tuple(Household(*row) for row in d["households"]),
            plans=tuple(ActivityPlan(v, h, tuple(Activity(*a) for a in acts))
                        for v, h, acts in d["plans"]),
            vehicles=tuple(VehicleSpec(*row) for row in d["vehicles"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "ScenarioBundle":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ScenarioBundle":
        return cls.from_json(Path(path).read_text())


def round_half_up(x: float) -> int:
    """Nearest integer, ties rounding up (x >= 0)."""
    return int(math.floor(round(x, 9) + 0.5))


def _rng(config: ScenarioConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, stream])


def generate_network(config: ScenarioConfig) -> NetworkGraph:
    config.validate()
    net = grid_network(config.grid_rows, config.grid_cols, config.spacing_km, config.speed_kmh,
                       config.link_length_jitter, _rng(config, 0))
    net.validate()
    return net


def generate_tazs(config: ScenarioConfig, network: NetworkGraph) -> tuple[Taz, ...]:
    """Square blocks of ``taz_block`` x ``taz_block`` grid nodes."""
    b = config.taz_block
    cols = config.grid_cols
    groups: dict[tuple[int, int], list[int]] = {}
    for node in range(network.n_nodes):
        r, c = divmod(node, cols)
        groups.setdefault((r // b, c // b), []).append(node)
    tazs = []
    for tid, key in enumerate(sorted(groups)):
        nodes = groups[key]
        pts = network.xy[nodes]
        d = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
        centroid = nodes[int(np.argmin(d))]  # argmin keeps the smallest id on ties
        tazs.append(Taz(tid, centroid, tuple(nodes)))
    return tuple(tazs)


def _pick(rng: np.random.Generator, candidates: np.ndarray, weights: np.ndarray | None = None) -> int:
    if weights is None:
        return int(candidates[rng.integers(len(candidates))])
    return int(rng.choice(candidates, p=weights / weights.sum()))


def _build_plan(rng, config, network, vehicle_id, household_id, home, center_weights):
    kinds_names = [n for n, _ in config.template_weights]
    w = np.array([w for _, w in config.template_weights], dtype=float)
    template = PLAN_TEMPLATES[kinds_names[int(rng.choice(len(w), p=w / w.sum()))]]
    nodes_all = np.arange(network.n_nodes)
    dist = network.distance_matrix

    middle = template[1:-1]
    nodes = [home]
    for j, kind in enumerate(middle):
        prev = nodes[-1]
        mask = nodes_all != prev
        if j == len(middle) - 1:
            mask &= nodes_all != home  # no zero-length trip back home
        if kind == "work":
            nodes.append(_pick(rng, nodes_all[mask], center_weights[mask]))
        elif kind == "shop":
            near = mask & (dist[prev] <= config.shop_radius_km)
            nodes.append(_pick(rng, nodes_all[near] if near.any() else nodes_all[mask]))
        else:
            nodes.append(_pick(rng, nodes_all[mask]))
    nodes.append(home)

    depart_mean = config.depart_mean_h if template[1] == "work" else config.depart_mean_h + 2.0
    depart = float(np.clip(rng.normal(depart_mean, config.depart_std_h), 5.0, 13.0)) * 3600.0
    durations = []
    for kind in template[1:-1]:
        if kind == "work":
            h = np.clip(rng.normal(config.work_mean_h, config.work_std_h), 3.0, 11.0)
        elif kind == "shop":
            h = rng.uniform(0.5, 1.5)
        else:
            h = rng.uniform(1.0, 4.0)
        durations.append(float(h) * 3600.0)

    travel = [float(network.time_matrix[a, b]) for a, b in zip(nodes, nodes[1:])]
    latest_home = DAY_S - 3600.0
    excess = depart + sum(durations) + sum(travel) - latest_home
    if excess > 0:
        # shorten the longest out-of-home activity, then the departure
        k = int(np.argmax(durations))
        cut = min(excess, durations[k] - 900.0)
        durations[k] -= cut
        depart = max(0.0, depart - (excess - cut))
    depart = round(depart)
    durations = [round(d) for d in durations]

    acts = [Activity("home", home, 0.0, float(depart))]
    t = float(depart)
    for kind, node, dur, tt in zip(template[1:-1], nodes[1:-1], durations, travel):
        t = float(round(t + tt))
        acts.append(Activity(kind, node, t, float(dur)))
        t += dur
    t = float(round(t + travel[-1]))
    acts.append(Activity("home", home, t, DAY_S - t))
    plan = ActivityPlan(vehicle_id, household_id, tuple(acts))
    plan.validate()
    return plan


def generate_population(config: ScenarioConfig, network: NetworkGraph
                        ) -> tuple[tuple[Household, ...], tuple[ActivityPlan, ...]]:
    """Households with EV / home-charger flags and one activity plan per vehicle.

    EV household count is ``round(vehicle households * penetration)`` and
    home-charger count ``round(EV households * share)``, rounding half up.
    """
    config.validate()
    if config.n_households > network.n_nodes * config.max_households_per_node:
        raise ConfigurationError(
            f"{config.n_households} households exceed network capacity "
            f"({network.n_nodes} nodes x {config.max_households_per_node})")
    rng = _rng(config, 1)
    n = config.n_households
    homes = rng.integers(0, network.n_nodes, size=n)
    n_veh = round_half_up(n * config.vehicle_household_share)
    has_vehicle = np.zeros(n, dtype=bool)
    has_vehicle[np.sort(rng.permutation(n)[:n_veh])] = True
    veh_idx = np.flatnonzero(has_vehicle)
    n_ev = round_half_up(n_veh * config.ev_penetration)
    ev_idx = np.sort(rng.permutation(veh_idx)[:n_ev])
    n_hc = round_half_up(n_ev * config.home_charger_share)
    hc_idx = np.sort(rng.permutation(ev_idx)[:n_hc])
    owns_ev = np.zeros(n, dtype=bool)
    owns_ev[ev_idx] = True
    home_charger = np.zeros(n, dtype=bool)
    home_charger[hc_idx] = True

    households = tuple(Household(i, int(homes[i]), bool(has_vehicle[i]), bool(owns_ev[i]),
                                 bool(home_charger[i])) for i in range(n))

    center = network.xy.mean(axis=0)
    d_center = np.linalg.norm(network.xy - center, axis=1)
    center_weights = np.exp(-d_center / config.work_centrality_km)
    plans = tuple(_build_plan(rng, config, network, vid, int(h), int(homes[h]), center_weights)
                  for vid, h in enumerate(veh_idx))
    return households, plans


def assign_fleet(config: ScenarioConfig, households, plans=None) -> tuple[VehicleSpec, ...]:
    """One vehicle per vehicle-owning household, ids in household order."""
    config.validate()
    rng = _rng(config, 2)
    owners = [h for h in households if h.has_vehicle]
    lo = max(0.0, config.initial_soc - config.initial_soc_spread)
    hi = min(1.0, config.initial_soc + config.initial_soc_spread)
    socs = rng.uniform(lo, hi, size=len(owners)) if hi > lo else np.full(len(owners), lo)
    return tuple(VehicleSpec(vid, h.id, h.owns_ev, config.battery_kwh, config.consumption_kwh_per_km,
                             float(round(socs[vid], 6)))
                 for vid, h in enumerate(owners))


def generate_scenario(config: ScenarioConfig | None = None, **overrides) -> ScenarioBundle:
    config = replace(config or ScenarioConfig(), **overrides)
    network = generate_network(config)
    tazs = generate_tazs(config, network)
    households, plans = generate_population(config, network)
    vehicles = assign_fleet(config, households)
    return ScenarioBundle(config, network, tazs, households, plans, vehicles)


REFERENCE_OVERRIDES = {"ev_penetration": 0.25, "initial_soc": 0.4, "initial_soc_spread": 0.4}


def reference_config(**overrides) -> ScenarioConfig:
    """The bundled reference scenario (10x10 grid, 2,000 households, seed 42).

    A 5% fleet on a 100-node grid puts about one EV on each node, too thin
    for any charger to see repeat use, and a full battery never triggers a
    charge on desk-scale trip lengths. The reference therefore uses a 25%
    fleet whose vehicles start the day uniformly between 0% and 80% SoC.
    """
    return replace(ScenarioConfig(), **{**REFERENCE_OVERRIDES, **overrides})
