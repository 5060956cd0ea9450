"""Budget-constrained capacitated maximal covering location on time-expanded demand.

Each latent charging event ``k`` with required charger type ``p_k`` becomes
one demand item per 30-minute bin it occupies. A site ``i`` with
``n[i, p]`` chargers of type ``p`` can serve at most ``n[i, p]`` type-``p``
items in any one bin, and only items whose event lies within the service
radius. The problem is to choose sites and charger counts, within a daily
budget, maximising the number of covered items.

For fixed charger counts the best assignment decomposes into independent
maximum b-matchings, one per (type, bin) group, which is what both solvers
use to score a configuration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .charging import CHARGER_TYPES
from .simulator import Deployment, LatentDemandEvent, Station

BIN_S = 1800.0
N_BINS = 48
DAY_S = BIN_S * N_BINS


class InputError(ValueError):
    pass


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    """Daily-equivalent costs in AUD, per charger type in order AC 7.2, AC 22, DC 150."""

    capex: tuple[float, float, float] = (1.10, 1.90, 41.1)
    opex: tuple[float, float, float] = (0.5, 0.8, 12.0)
    site_ac: float = 5.48
    site_dc: float = 27.40
    budget: float = 2600.0

    def __post_init__(self):
        if min(self.capex + self.opex) < 0 or self.site_ac < 0 or self.site_dc < 0 or self.budget < 0:
            raise ValueError("costs and budget must be non-negative")

    @property
    def charger_cost(self) -> np.ndarray:
        return np.asarray(self.capex, dtype=float) + np.asarray(self.opex, dtype=float)

    def site_cost(self, has_dc: bool) -> float:
        return self.site_dc if has_dc else self.site_ac

    def counts_cost(self, counts: np.ndarray, open_sites: Optional[np.ndarray] = None) -> float:
        """Charger plus site cost for an (S, 3) count matrix.

        ``open_sites`` defaults to the sites holding at least one charger.
        """
        counts = np.asarray(counts)
        if counts.size == 0:
            return 0.0
        if open_sites is None:
            open_sites = counts.sum(axis=1) > 0
        dc = counts[:, 2] >= 1
        site = np.where(dc, self.site_dc, self.site_ac) * np.asarray(open_sites, dtype=bool)
        return float((counts * self.charger_cost).sum() + site.sum())


def deployment_cost(obj, cost: CostModel = CostModel()) -> float:
    """Daily cost of a :class:`Deployment` or :class:`CmclpSolution`."""
    if isinstance(obj, Deployment):
        n = np.array([s.counts for s in obj.stations], dtype=int).reshape(-1, 3)
        return cost.counts_cost(n)
    return cost.counts_cost(obj.counts, obj.open_sites)


def expand_demand(events: Sequence[LatentDemandEvent]) -> np.ndarray:
    """(K, 2) array of (event index, bin) items; bins are half-open 30-minute slots."""
    items = []
    for k, e in enumerate(events):
        if not (0.0 <= e.start < DAY_S) or not (e.start <= e.end <= DAY_S):
            raise InputError(f"event {k} [{e.start}, {e.end}] lies outside the day")
        first = int(e.start // BIN_S)
        last = max(first, int(math.ceil(e.end / BIN_S)) - 1)
        items.extend((k, b) for b in range(first, last + 1))
    return np.asarray(items, dtype=np.int64).reshape(-1, 2)


def build_candidates(events: Sequence[LatentDemandEvent], radius_km: float = 1.0
                     ) -> tuple[np.ndarray, np.ndarray, tuple[tuple[int, ...], ...]]:
    """Candidate sites at the distinct event locations.

    Returns ``(site_xy, site_nodes, neighborhoods)`` where ``neighborhoods[k]``
    lists the sites within ``radius_km`` (Euclidean) of event ``k``.
    """
    locs: dict[tuple[float, float], int] = {}
    for e in events:
        locs.setdefault((float(e.x), float(e.y)), int(e.node))
    keys = sorted(locs)
    site_xy = np.asarray(keys, dtype=float).reshape(-1, 2)
    site_nodes = np.asarray([locs[k] for k in keys], dtype=np.int64)
    if not events:
        return site_xy, site_nodes, ()
    ev_xy = np.asarray([(e.x, e.y) for e in events], dtype=float)
    d = np.hypot(ev_xy[:, None, 0] - site_xy[None, :, 0], ev_xy[:, None, 1] - site_xy[None, :, 1])
    within = d <= radius_km + 1e-9
    return site_xy, site_nodes, tuple(tuple(int(i) for i in np.flatnonzero(row)) for row in within)


@dataclass(frozen=True, eq=False)
class CmclpInstance:
    site_xy: np.ndarray
    site_nodes: np.ndarray
    event_type: np.ndarray  # (E,) charger type index of each event
    neighborhoods: tuple[tuple[int, ...], ...]  # per event
    items: np.ndarray  # (K, 2) of (event, bin)
    cost: CostModel = CostModel()
    radius_km: float = 1.0

    @property
    def n_sites(self) -> int:
        return len(self.site_xy)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def budget(self) -> float:
        return self.cost.budget

    @property
    def item_type(self) -> np.ndarray:
        if self.n_items == 0:
            return np.zeros(0, dtype=np.int64)
        return self.event_type[self.items[:, 0]]

    def item_sites(self, item: int) -> tuple[int, ...]:
        return self.neighborhoods[int(self.items[item, 0])]

    def with_budget(self, budget: float) -> "CmclpInstance":
        from dataclasses import replace
        return replace(self, cost=replace(self.cost, budget=float(budget)))

    def groups(self) -> dict[tuple[int, int], list[int]]:
        """Item indices keyed by (type index, bin), in item order."""
        out: dict[tuple[int, int], list[int]] = {}
        types = self.item_type
        for q, (_, b) in enumerate(self.items):
            out.setdefault((int(types[q]), int(b)), []).append(q)
        return out

    def coverable(self) -> int:
        return sum(1 for k, _ in self.items if self.neighborhoods[int(k)])

    def max_concurrency(self) -> np.ndarray:
        """(S, 3) bound on useful chargers: peak same-type, same-bin reachable items."""
        ub = np.zeros((self.n_sites, 3), dtype=np.int64)
        for (p, _), qs in self.groups().items():
            cnt = np.zeros(self.n_sites, dtype=np.int64)
            for q in qs:
                for i in self.item_sites(q):
                    cnt[i] += 1
            ub[:, p] = np.maximum(ub[:, p], cnt)
        return ub


def build_instance(events: Sequence[LatentDemandEvent], cost: CostModel = CostModel(),
                   radius_km: float = 1.0) -> CmclpInstance:
    items = expand_demand(events)
    site_xy, site_nodes, nbhd = build_candidates(events, radius_km)
    types = np.asarray([e.charger_type.index for e in events], dtype=np.int64)
    return CmclpInstance(site_xy, site_nodes, types, nbhd, items, cost, radius_km)


@dataclass(frozen=True, eq=False)
class CmclpSolution:
    open_sites: np.ndarray  # (S,) bool
    counts: np.ndarray  # (S, 3) int
    assignments: tuple[tuple[int, int], ...]  # (site, item) pairs with a = 1
    covered: np.ndarray  # (K,) bool
    objective: int

    def to_deployment(self, instance: CmclpInstance) -> Deployment:
        stations = []
        for i in np.flatnonzero(self.open_sites):
            counts = tuple(int(c) for c in self.counts[i])
            if sum(counts) == 0:
                continue
            x, y = instance.site_xy[i]
            stations.append(Station(int(i), int(instance.site_nodes[i]), float(x), float(y), counts))
        return Deployment(tuple(stations))


@dataclass(frozen=True)
class SolveReport:
    solver: str  # exact | heuristic
    objective: int
    optimal: bool
    bound: Optional[int]
    wall_time_s: float
    cost: float
    nodes: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Violation:
    constraint: str  # assignment | selection | capacity | budget | domain | objective
    message: str


# ---------------------------------------------------------------------------
# b-matching of one (type, bin) group

class _Group:
    """Maximum b-matching between the items of one (type, bin) group and sites."""

    __slots__ = ("p", "items", "adj", "match", "load", "reach")

    def __init__(self, p: int, items: list[int], adj: list[tuple[int, ...]]):
        self.p = p
        self.items = items
        self.adj = adj
        self.match = [-1] * len(items)
        self.load: dict[int, list[int]] = {}
        self.reach: set[int] = set()

    @property
    def size(self) -> int:
        return sum(1 for m in self.match if m >= 0)

    def _assign(self, u: int, s: int) -> None:
        old = self.match[u]
        if old >= 0:
            self.load[old].remove(u)
        self.match[u] = s
        self.load.setdefault(s, []).append(u)

    def _augment(self, u: int, cap, seen: set) -> bool:
        for s in self.adj[u]:
            if s in seen:
                continue
            seen.add(s)
            held = self.load.get(s, ())
            if len(held) < cap[s]:
                self._assign(u, s)
                return True
            for w in list(held):
                if self._augment(w, cap, seen):
                    self._assign(u, s)
                    return True
        return False

    def solve(self, cap) -> None:
        """Extend the current matching to a maximum one under capacities ``cap``."""
        for s, held in self.load.items():
            while len(held) > cap[s]:
                self.match[held.pop()] = -1
        for u in range(len(self.items)):
            if self.match[u] < 0 and self.adj[u]:
                self._augment(u, cap, set())

    def reachable(self) -> set[int]:
        """Sites where one extra unit of capacity would enlarge the matching."""
        seen: set[int] = set()
        stack = [u for u in range(len(self.items)) if self.match[u] < 0]
        visited_items = set(stack)
        while stack:
            u = stack.pop()
            for s in self.adj[u]:
                if s in seen:
                    continue
                seen.add(s)
                for w in self.load.get(s, ()):
                    if w not in visited_items:
                        visited_items.add(w)
                        stack.append(w)
        return seen


class _Coverage:
    """Coverage of a charger-count matrix, maintained incrementally per group."""

    def __init__(self, instance: CmclpInstance, n: Optional[np.ndarray] = None):
        self.inst = instance
        self.counts = np.zeros((instance.n_sites, 3), dtype=np.int64) if n is None else np.array(n, dtype=np.int64)
        self.groups: dict[tuple[int, int], _Group] = {}
        self.site_groups: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for key, qs in sorted(instance.groups().items()):
            adj = [instance.item_sites(q) for q in qs]
            self.groups[key] = _Group(key[0], qs, adj)
            for s in sorted({s for a in adj for s in a}):
                self.site_groups.setdefault((s, key[0]), []).append(key)
        self.gain = np.zeros((instance.n_sites, 3), dtype=np.int64)
        for key, g in self.groups.items():
            g.solve(self.counts[:, key[0]])
            g.reach = g.reachable()
            for s in g.reach:
                self.gain[s, key[0]] += 1
        self.value = sum(g.size for g in self.groups.values())

    def _refresh(self, keys) -> None:
        for key in keys:
            g = self.groups[key]
            p = key[0]
            before = g.size
            for s in g.reach:
                self.gain[s, p] -= 1
            g.solve(self.counts[:, p])
            g.reach = g.reachable()
            for s in g.reach:
                self.gain[s, p] += 1
            self.value += g.size - before

    def change(self, i: int, p: int, delta: int) -> None:
        self.counts[i, p] += delta
        self._refresh(self.site_groups.get((i, p), ()))

    def set(self, n: np.ndarray) -> None:
        diff = np.argwhere(np.asarray(n) != self.counts)
        self.counts = np.array(n, dtype=np.int64)
        keys = sorted({k for i, p in diff for k in self.site_groups.get((int(i), int(p)), ())})
        self._refresh(keys)

    def solution(self) -> CmclpSolution:
        inst = self.inst
        covered = np.zeros(inst.n_items, dtype=bool)
        pairs = []
        for g in self.groups.values():
            for u, s in enumerate(g.match):
                if s >= 0:
                    pairs.append((int(s), int(g.items[u])))
                    covered[g.items[u]] = True
        pairs.sort(key=lambda t: (t[1], t[0]))
        x = self.counts.sum(axis=1) > 0
        return CmclpSolution(x, self.counts.copy(), tuple(pairs), covered, int(covered.sum()))


def coverage_value(instance: CmclpInstance, n: np.ndarray) -> int:
    """Maximum number of items coverable with charger counts ``n``."""
    return _Coverage(instance, n).value


def _incremental_cost(cost: CostModel, n: np.ndarray, i: int, p: int) -> float:
    c = cost.charger_cost[p]
    if n[i].sum() == 0:
        return c + cost.site_cost(p == 2)
    if p == 2 and n[i, 2] == 0:
        return c + cost.site_dc - cost.site_ac
    return c


def _trim(instance: CmclpInstance, cov: _Coverage) -> None:
    """Drop chargers whose removal loses no coverage (most expensive first)."""
    order = sorted(((p, i) for i in range(instance.n_sites) for p in range(3)), key=lambda t: (-t[0], t[1]))
    for p, i in order:
        while cov.counts[i, p] > 0:
            before = cov.value
            cov.change(i, p, -1)
            if cov.value < before:
                cov.change(i, p, +1)
                break


# ---------------------------------------------------------------------------
# exact branch and bound

def solve_exact(instance: CmclpInstance, max_sites: int = 8, max_items: int = 40
                ) -> tuple[CmclpSolution, SolveReport]:
    """Optimal coverage by depth-first branch and bound over charger counts.

    Site selection follows the counts (a site is open iff it has a charger).
    Each node is bounded by the coverage obtained with every undecided count
    at its concurrency bound, and by a lower bound on the committed cost.
    """
    if instance.n_sites > max_sites or instance.n_items > max_items:
        raise InstanceTooLarge(
            f"exact solver limited to {max_sites} sites / {max_items} items, "
            f"got {instance.n_sites} / {instance.n_items}")
    t0 = time.perf_counter()
    cost = instance.cost
    ub = instance.max_concurrency()
    variables = [(i, p) for i in range(instance.n_sites) for p in range(3) if ub[i, p] > 0]
    cov = _Coverage(instance, ub)
    best_n = np.zeros_like(ub)
    best_val = 0
    nodes = 0
    budget = cost.budget + 1e-9

    def committed_cost(n, depth):
        decided = np.zeros_like(n)
        for i, p in variables[:depth]:
            decided[i, p] = n[i, p]
        return cost.counts_cost(decided)

    def dfs(depth: int, n: np.ndarray) -> None:
        nonlocal best_val, best_n, nodes
        nodes += 1
        if committed_cost(n, depth) > budget:
            return
        cov.set(n)  # undecided variables sit at their bound
        if cov.value <= best_val:
            return
        if depth == len(variables):
            best_val = cov.value
            best_n = n.copy()
            return
        i, p = variables[depth]
        for v in range(int(ub[i, p]), -1, -1):
            child = n.copy()
            child[i, p] = v
            dfs(depth + 1, child)
            if best_val == instance.coverable():
                return

    dfs(0, ub.copy())
    cov.set(best_n)
    _trim(instance, cov)
    sol = cov.solution()
    report = SolveReport("exact", sol.objective, True, best_val, time.perf_counter() - t0,
                         deployment_cost(sol, cost), nodes)
    return sol, report


# ---------------------------------------------------------------------------
# greedy + local search

def _greedy_fill(instance: CmclpInstance, cov: _Coverage, forbid: frozenset = frozenset(),
                 forbid_site: int = -1) -> None:
    """Add chargers by coverage gain per incremental cost while the budget allows."""
    cost = instance.cost
    budget = cost.budget + 1e-9
    while True:
        spent = cost.counts_cost(cov.counts)
        best = None
        for i, p in np.argwhere(cov.gain > 0):
            i, p = int(i), int(p)
            if i == forbid_site or (i, p) in forbid:
                continue
            c = _incremental_cost(cost, cov.counts, i, p)
            if spent + c > budget:
                continue
            key = (-cov.gain[i, p] / c if c > 0 else -math.inf, -cov.gain[i, p], i, p)
            if best is None or key < best:
                best = key
        if best is None:
            return
        cov.change(best[2], best[3], +1)


def _better(a_val: int, a_cost: float, b_val: int, b_cost: float) -> bool:
    return a_val > b_val or (a_val == b_val and a_cost < b_cost - 1e-9)


def solve_heuristic(instance: CmclpInstance, max_passes: int = 20
                    ) -> tuple[CmclpSolution, SolveReport]:
    """Greedy ratio construction followed by drop/swap/close-site local search.

    Each move removes one charger (or closes a site), refills greedily with
    the freed budget elsewhere, and is kept only if coverage rises or stays
    equal at lower cost. Candidates are scanned in (site, type) order, so
    the result is deterministic.
    """
    t0 = time.perf_counter()
    cost = instance.cost
    cov = _Coverage(instance)
    _greedy_fill(instance, cov)
    _trim(instance, cov)
    _greedy_fill(instance, cov)

    for _ in range(max_passes):
        improved = False
        moves = [(int(i), int(p)) for i, p in np.argwhere(cov.counts > 0)]
        moves += [(int(i), -1) for i in np.flatnonzero(cov.counts.sum(axis=1) > 0)]
        for i, p in moves:
            if (cov.counts[i, p] == 0) if p >= 0 else (cov.counts[i].sum() == 0):
                continue
            base_n = cov.counts.copy()
            base_val, base_cost = cov.value, cost.counts_cost(base_n)
            if p >= 0:
                cov.change(i, p, -1)
                _greedy_fill(instance, cov, forbid=frozenset({(i, p)}))
            else:
                trial = base_n.copy()
                trial[i] = 0
                cov.set(trial)
                _greedy_fill(instance, cov, forbid_site=i)
            if _better(cov.value, cost.counts_cost(cov.counts), base_val, base_cost):
                improved = True
            else:
                cov.set(base_n)
        if not improved:
            break
    _trim(instance, cov)
    sol = cov.solution()
    report = SolveReport("heuristic", sol.objective, False, None, time.perf_counter() - t0,
                         deployment_cost(sol, cost))
    return sol, report


# ---------------------------------------------------------------------------

def verify_solution(instance: CmclpInstance, solution: CmclpSolution) -> list[Violation]:
    """Check a solution against assignment, selection, capacity and budget constraints."""
    out: list[Violation] = []
    S, K = instance.n_sites, instance.n_items
    opened = np.asarray(solution.open_sites)
    counts = np.asarray(solution.counts)
    covered = np.asarray(solution.covered)
    if opened.shape != (S,) or counts.shape != (S, 3) or covered.shape != (K,):
        return [Violation("domain", "array shapes do not match the instance")]
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        out.append(Violation("domain", "charger counts must be non-negative integers"))
    if np.any(counts[~opened.astype(bool)] > 0):
        out.append(Violation("domain", "chargers installed at an unselected site"))

    per_item: dict[int, list[int]] = {}
    seen_pairs = set()
    for s, q in solution.assignments:
        if not (0 <= s < S and 0 <= q < K):
            out.append(Violation("domain", f"assignment ({s}, {q}) out of range"))
            continue
        if (s, q) in seen_pairs:
            out.append(Violation("domain", f"duplicate assignment ({s}, {q})"))
        seen_pairs.add((s, q))
        per_item.setdefault(q, []).append(s)

    for q in range(K):
        sites = per_item.get(q, [])
        nb = set(instance.item_sites(q))
        outside = [s for s in sites if s not in nb]
        if outside:
            out.append(Violation("assignment", f"item {q} assigned outside its neighbourhood to {outside}"))
        inside = len(sites) - len(outside)
        if inside != int(covered[q]):
            out.append(Violation("assignment", f"item {q}: {inside} assignments but covered={int(covered[q])}"))

    for s, q in seen_pairs:
        if not opened[s]:
            out.append(Violation("selection", f"item {q} assigned to unselected site {s}"))

    types = instance.item_type
    load: dict[tuple[int, int, int], int] = {}
    for s, q in seen_pairs:
        key = (s, int(types[q]), int(instance.items[q, 1]))
        load[key] = load.get(key, 0) + 1
    for (s, p, b), cnt in sorted(load.items()):
        if cnt > counts[s, p]:
            out.append(Violation("capacity", f"site {s} type {CHARGER_TYPES[p].value} bin {b}: "
                                             f"{cnt} items > {counts[s, p]} chargers"))

    total = instance.cost.counts_cost(counts, opened)
    if total > instance.budget + 1e-9:
        out.append(Violation("budget", f"cost {total:.2f} exceeds budget {instance.budget:.2f}"))
    if solution.objective != int(covered.sum()):
        out.append(Violation("objective", f"objective {solution.objective} != covered {int(covered.sum())}"))
    return out
