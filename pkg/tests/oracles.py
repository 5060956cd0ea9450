"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools

import numpy as np

from evdeploy.charging import CHARGER_TYPES
from evdeploy.cmclp import BIN_S, CostModel, build_instance
from evdeploy.simulator import LatentDemandEvent


def random_instance(rng: np.random.Generator, max_sites: int = 5, max_items: int = 12, max_n: int = 2,
                    cost: CostModel = CostModel()):
    """Small random CMCLP instance whose per-(site, type) concurrency never exceeds ``max_n``."""
    while True:
        n_loc = int(rng.integers(1, max_sites + 1))
        grid = [(x * 0.5, y * 0.5) for x in range(6) for y in range(6)]
        locs = [grid[i] for i in rng.choice(len(grid), size=n_loc, replace=False)]
        events = []
        for k in range(int(rng.integers(1, 9))):
            x, y = locs[int(rng.integers(n_loc))]
            b = int(rng.integers(0, 6))
            span = int(rng.integers(0, 3))
            start = 16 * BIN_S + b * BIN_S + float(rng.uniform(0, BIN_S / 2))
            end = start + span * BIN_S
            ctype = CHARGER_TYPES[int(rng.integers(3))]
            events.append(LatentDemandEvent(k, k, 0, x, y, start, end, 10.0, ctype, "destination"))
        inst = build_instance(events, cost)
        if not 1 <= inst.n_items <= max_items or inst.n_sites > max_sites:
            continue
        if inst.max_concurrency().max() > max_n:
            continue
        full = cost.counts_cost(inst.max_concurrency())
        budget = float(np.round(rng.uniform(0.0, 1.1) * full, 2))
        return inst.with_budget(budget)


def _group_cover(adj: list[tuple[int, ...]], cap: dict[int, int]) -> int:
    # exhaustive: every item picks one of its sites or stays uncovered
    best = 0
    options = [list(a) + [None] for a in adj]
    for choice in itertools.product(*options):
        used: dict[int, int] = {}
        ok = True
        for s in choice:
            if s is None:
                continue
            used[s] = used.get(s, 0) + 1
            if used[s] > cap.get(s, 0):
                ok = False
                break
        if ok:
            best = max(best, sum(s is not None for s in choice))
    return best


def brute_force_coverage(instance, n: np.ndarray, memo: dict | None = None) -> int:
    memo = {} if memo is None else memo
    groups: dict[tuple[int, int], list[int]] = {}
    for q, (k, b) in enumerate(instance.items):
        groups.setdefault((int(instance.event_type[k]), int(b)), []).append(q)
    total = 0
    for (p, b), qs in groups.items():
        near = sorted({i for q in qs for i in instance.neighborhoods[int(instance.items[q, 0])]})
        cap = {i: int(n[i, p]) for i in near}
        key = (p, b, tuple(sorted(cap.items())))
        if key not in memo:
            adj = [tuple(s for s in instance.neighborhoods[int(instance.items[q, 0])] if cap[s] > 0)
                   for q in qs]
            memo[key] = _group_cover(adj, cap)
        total += memo[key]
    return total


def brute_force_cmclp(instance, max_n: int = 2) -> int:
    """Best objective over every charger-count matrix with entries <= max_n.

    A site is open exactly when it holds a charger: opening an empty site
    only costs money, and chargers at a closed site can serve nobody.
    """
    S = instance.n_sites
    reach = np.zeros((S, 3), dtype=int)
    for k, b in instance.items:
        for i in instance.neighborhoods[int(k)]:
            reach[i, instance.event_type[k]] = 1
    cells = [(i, p) for i in range(S) for p in range(3) if reach[i, p]]
    unit = instance.cost.charger_cost
    cost = instance.cost
    memo: dict = {}
    n = np.zeros((S, 3), dtype=int)
    best = 0

    def spent() -> float:
        sites = sum(cost.site_dc if n[i, 2] > 0 else cost.site_ac for i in range(S) if n[i].sum() > 0)
        return float((n * unit).sum()) + sites

    def walk(j: int) -> None:
        # every cost term is non-negative, so an over-budget prefix stays over budget
        nonlocal best
        if spent() > instance.budget + 1e-9:
            return
        if j == len(cells):
            best = max(best, brute_force_coverage(instance, n, memo))
            return
        i, p = cells[j]
        for v in range(max_n + 1):
            n[i, p] = v
            walk(j + 1)
        n[i, p] = 0

    walk(0)
    return best


def milp_cmclp(instance) -> int:
    """Same problem as a mixed-integer program solved by HiGHS (scipy)."""
    from scipy.optimize import LinearConstraint, milp, Bounds

    S, K = instance.n_sites, instance.n_items
    pairs = [(i, q) for q in range(K) for i in instance.neighborhoods[int(instance.items[q, 0])]]
    # variable layout: x (S), dc (S), n (S*3), a (pairs), c (K)
    nx, nd, nn, na, nc = S, S, 3 * S, len(pairs), K
    off_d, off_n, off_a, off_c = nx, nx + nd, nx + nd + nn, nx + nd + nn + na
    nv = off_c + nc
    obj = np.zeros(nv)
    obj[off_c:] = -1.0
    rows, lo, hi = [], [], []

    def row():
        r = np.zeros(nv)
        rows.append(r)
        return r

    types = instance.event_type[instance.items[:, 0]] if K else np.zeros(0, int)
    for q in range(K):
        r = row()
        for j, (i, qq) in enumerate(pairs):
            if qq == q:
                r[off_a + j] = 1
        r[off_c + q] = -1
        lo.append(0); hi.append(0)
    for j, (i, q) in enumerate(pairs):
        r = row(); r[off_a + j] = 1; r[i] = -1; lo.append(-np.inf); hi.append(0)
    bins = sorted({int(b) for b in instance.items[:, 1]})
    for i in range(S):
        for p in range(3):
            for b in bins:
                r = row()
                for j, (ii, q) in enumerate(pairs):
                    if ii == i and types[q] == p and instance.items[q, 1] == b:
                        r[off_a + j] = 1
                r[off_n + 3 * i + p] = -1
                lo.append(-np.inf); hi.append(0)
        big = 100
        r = row(); r[off_n + 3 * i + 2] = 1; r[off_d + i] = -big; lo.append(-np.inf); hi.append(0)
        r = row(); r[off_d + i] = 1; r[i] = -1; lo.append(-np.inf); hi.append(0)
        r = row()
        for p in range(3):
            r[off_n + 3 * i + p] = 1
        r[i] = -big; lo.append(-np.inf); hi.append(0)
    r = row()
    unit = instance.cost.charger_cost
    for i in range(S):
        for p in range(3):
            r[off_n + 3 * i + p] = unit[p]
        r[i] = instance.cost.site_ac
        r[off_d + i] = instance.cost.site_dc - instance.cost.site_ac
    lo.append(-np.inf); hi.append(instance.budget + 1e-9)
    ub = np.ones(nv)
    ub[off_n:off_n + nn] = 100
    res = milp(obj, constraints=LinearConstraint(np.array(rows), lo, hi), integrality=np.ones(nv),
               bounds=Bounds(np.zeros(nv), ub))
    return int(round(-res.fun))


def as_networkx(net):
    """Directed weighted copy of a NetworkGraph."""
    import networkx as nx

    g = nx.DiGraph()
    g.add_nodes_from(range(net.n_nodes))
    for (a, b), length in zip(net.links, net.length_km):
        g.add_edge(int(a), int(b), weight=float(length))
    return g


def occupancy_scan(intervals, n_chargers: int, horizon_s: int = 86400, step_s: int = 1) -> float:
    """Seconds at which at least ``n_chargers`` intervals are active, sampled every ``step_s``.

    Each sample stands for ``[t, t + step_s)`` and counts an interval as active
    when its midpoint lies inside.
    """
    t = np.arange(0, horizon_s, step_s) + step_s / 2.0
    level = np.zeros(len(t), dtype=int)
    for a, b in intervals:
        level += (t >= a) & (t < b)
    return float(step_s * np.count_nonzero(level >= n_chargers))


def energy_residuals(log) -> dict[int, float]:
    """initial - driven energy + charged energy - final, per vehicle (should be zero)."""
    charged: dict[int, float] = {}
    for s in log.sessions:
        charged[s.vehicle_id] = charged.get(s.vehicle_id, 0.0) + s.energy_kwh
    return {v.vehicle_id: v.initial_kwh - v.distance_km * v.consumption_kwh_per_km
            + charged.get(v.vehicle_id, 0.0) - v.final_kwh for v in log.energy}


def capacity_overloads(sessions, deployment) -> list[tuple[int, object, int]]:
    """(station, type, peak) wherever simultaneous sessions exceed the installed count."""
    by_key: dict = {}
    for s in sessions:
        if s.station_id is not None and s.end > s.start:
            by_key.setdefault((s.station_id, s.charger_type), []).append(s)
    stations = deployment.by_id()
    bad = []
    for (sid, ctype), group in by_key.items():
        # peak concurrency is attained at some session start
        peak = max(sum(1 for o in group if o.start <= g.start < o.end) for g in group)
        if peak > stations[sid].count(ctype):
            bad.append((sid, ctype, peak))
    return bad


MUTATIONS = ("assignment", "selection", "capacity", "budget", "objective")


def mutate(instance, solution, kind: str, rng: np.random.Generator):
    """Return ``(instance, solution)`` with one violation of ``kind`` injected, or None
    when the solution offers nothing to break in that way."""
    from dataclasses import replace

    opened = solution.open_sites.copy()
    counts = solution.counts.copy()
    covered = solution.covered.copy()
    pairs = list(solution.assignments)
    K = instance.n_items
    if kind == "assignment":
        choice = int(rng.integers(3))
        if choice == 0 and K:  # claim coverage of an unassigned item, or drop an assignment
            q = int(rng.integers(K))
            if covered[q]:
                pairs = [p for p in pairs if p[1] != q]
            else:
                covered[q] = True
                return instance, replace(solution, covered=covered, objective=solution.objective + 1)
        elif choice == 1 and pairs:  # serve an item from two sites
            s, q = pairs[int(rng.integers(len(pairs)))]
            others = [i for i in range(instance.n_sites) if i != s]
            if not others:
                return None
            pairs.append((int(rng.choice(others)), q))
        else:  # serve an item from outside its neighbourhood
            options = [(i, q) for q in range(K) if not covered[q]
                       for i in range(instance.n_sites) if i not in instance.item_sites(q)]
            if not options:
                return None
            i, q = options[int(rng.integers(len(options)))]
            pairs.append((i, q))
            covered[q] = True
            return instance, replace(solution, assignments=tuple(pairs), covered=covered,
                                     objective=solution.objective + 1)
        return instance, replace(solution, assignments=tuple(pairs))
    if kind == "selection":
        used = sorted({s for s, _ in pairs})
        if not used:
            return None
        opened[int(rng.choice(used))] = False
        return instance, replace(solution, open_sites=opened)
    if kind == "capacity":
        if not pairs:
            return None
        s, q = pairs[int(rng.integers(len(pairs)))]
        counts[s, int(instance.item_type[q])] -= 1
        p = int(instance.item_type[q])
        load = sum(1 for s2, q2 in pairs if s2 == s and instance.item_type[q2] == p
                   and instance.items[q2, 1] == instance.items[q, 1])
        if load <= counts[s, p]:  # slack left: remove enough chargers to bind
            counts[s, p] = load - 1
        return instance, replace(solution, counts=counts)
    if kind == "budget":
        spent = instance.cost.counts_cost(counts, opened)
        if spent <= 0:
            return None
        return instance.with_budget(float(rng.uniform(0.0, spent - 1e-6))), solution
    if kind == "objective":
        delta = int(rng.choice([-1, 1])) * int(rng.integers(1, 3))
        return instance, replace(solution, objective=solution.objective + delta)
    raise ValueError(kind)


def random_sessions(rng: np.random.Generator, n_stations: int = 3, max_count: int = 3, max_sessions: int = 25):
    """A random deployment plus sessions packed onto individual plugs so that
    no (station, type) is ever over-subscribed. Times are whole seconds, so a
    1 s occupancy scan measures them exactly; back-to-back sessions are common."""
    from evdeploy.charging import CHARGER_TYPES as TYPES
    from evdeploy.simulator import ChargingSession, Deployment, Station

    stations = []
    for sid in range(n_stations):
        counts = tuple(int(c) for c in rng.integers(0, max_count + 1, size=3))
        if sum(counts) == 0:
            counts = (1, 0, 0)
        stations.append(Station(sid, sid, float(sid), 0.0, counts))
    dep = Deployment(tuple(stations))
    sessions = []
    for st in stations:
        for t in TYPES:
            for _plug in range(st.count(t)):
                clock = int(rng.integers(0, 4 * 3600))
                for _ in range(int(rng.integers(0, max_sessions // 3 + 1))):
                    gap = 0 if rng.random() < 0.3 else int(rng.integers(0, 3 * 3600))
                    start = clock + gap
                    end = start + int(rng.integers(60, 4 * 3600))
                    if start >= 86400:
                        break
                    energy = t.power_kw * (end - start) / 3600.0 * float(rng.uniform(0.2, 1.0))
                    sessions.append(ChargingSession(len(sessions), len(sessions), st.id, t, float(start), float(end), energy,
                                                    "destination"))
                    clock = end
    return dep, sessions
