"""The ten acceptance criteria, each at its stated tolerance.

Every test records a one-line verdict (shown in the pytest terminal summary)
before asserting, so a failing criterion still reports what it measured.
"""

import time

import numpy as np
import pytest

from evdeploy.charging import ChargerType, Thresholds, destination_charge_probability
from evdeploy.cmclp import CostModel, deployment_cost, solve_exact, solve_heuristic, verify_solution
from evdeploy.pipeline import run_all
from evdeploy.refine import RefineConfig, compute_flh, compute_utilization, refine_loop
from evdeploy.scenario import generate_scenario, reference_config
from evdeploy.simulator import Deployment, Mode, Regime, Station, simulate_day

from acceptance_log import record
from oracles import (MUTATIONS, brute_force_cmclp, capacity_overloads, energy_residuals, mutate, occupancy_scan,
                     random_instance, random_sessions)

SEED = 42


@pytest.fixture(scope="module")
def instances():
    rng = np.random.default_rng(20240601)
    return [random_instance(rng, max_sites=5, max_items=12, max_n=2) for _ in range(200)]


@pytest.fixture(scope="module")
def solved(instances):
    t0 = time.perf_counter()
    exact = [solve_exact(inst)[0] for inst in instances]
    exact_s = time.perf_counter() - t0
    heur = [solve_heuristic(inst)[0] for inst in instances]
    return exact, exact_s, heur


@pytest.fixture(scope="module")
def scenario():
    return generate_scenario(reference_config(seed=SEED))


@pytest.fixture(scope="module")
def pipeline(scenario):
    t0 = time.perf_counter()
    runs = run_all(scenario, seed=SEED)
    return runs, time.perf_counter() - t0


def test_criterion_01_charge_probability_closed_form():
    rng = np.random.default_rng(1)
    worst, exact_bounds = 0.0, True
    for _ in range(1000):
        lo, hi = np.sort(rng.uniform(0.0, 1.0, 2))
        if hi - lo < 1e-6:
            continue
        th = Thresholds(float(lo), float(hi))
        soc = float(rng.uniform(0.0, 1.0))
        want = 1.0 if soc <= lo else 0.0 if soc >= hi else (hi - soc) / (hi - lo)
        worst = max(worst, abs(destination_charge_probability(soc, th) - want))
        exact_bounds &= destination_charge_probability(float(lo), th) == 1.0
        exact_bounds &= destination_charge_probability(float(hi), th) == 0.0
    ok = worst <= 1e-12 and exact_bounds
    record(1, "charge probability closed form", ok, f"max error {worst:.1e}, boundaries exact={exact_bounds}")
    assert ok


def test_criterion_02_exact_matches_enumeration(instances, solved):
    exact, exact_s, _ = solved
    mismatches = sum(sol.objective != brute_force_cmclp(inst, max_n=2) for inst, sol in zip(instances, exact))
    ok = mismatches == 0 and exact_s < 60.0
    record(2, "exact solver equals brute-force enumeration", ok,
           f"{mismatches}/200 mismatches, exact solves {exact_s:.1f}s")
    assert ok


def test_criterion_03_heuristic_quality(instances, solved):
    exact, _, heur = solved
    good = sum(h.objective >= 0.9 * e.objective for h, e in zip(heur, exact))
    bad = sum(bool(verify_solution(i, s)) for i, sols in zip(instances, zip(exact, heur)) for s in sols)
    ok = good >= 0.95 * len(instances) and bad == 0
    record(3, "heuristic within 90% of exact", ok, f"{good}/200 instances, {bad} solutions with violations")
    assert ok


def test_criterion_04_verifier_catches_every_mutation(instances, solved):
    exact, _, heur = solved
    rng = np.random.default_rng(4)
    pool = [(inst, sol) for inst, pair in zip(instances, zip(exact, heur)) for sol in pair]
    probes = missed = 0
    while probes < 10_000:
        inst, sol = pool[int(rng.integers(len(pool)))]
        kind = MUTATIONS[probes % len(MUTATIONS)]
        hit = mutate(inst, sol, kind, rng)
        if hit is None:
            hit = mutate(inst, sol, "objective", rng)
            kind = "objective"
        probes += 1
        if kind not in {v.constraint for v in verify_solution(*hit)}:
            missed += 1
    record(4, "verifier detects injected violations", missed == 0, f"{probes} probes, {missed} missed")
    assert missed == 0


def test_criterion_05_simulator_conservation(scenario, pipeline):
    runs, _ = pipeline
    worst, overloads, sessions = 0.0, 0, 0
    regimes = list(Regime)
    for seed in range(100):
        regime = regimes[seed % 3]
        dep = runs[regime].cmclp.deployment
        log = simulate_day(scenario, regime, Mode.EVALUATION, dep, None, seed)
        worst = max(worst, max(abs(r) for r in energy_residuals(log).values()))
        overloads += len(capacity_overloads(log.sessions, dep))
        sessions += len(log.public_sessions())
    ok = worst <= 1e-6 and overloads == 0
    record(5, "energy closure and charger capacity", ok,
           f"max residual {worst:.1e} kWh, {overloads} overloads over {sessions} public sessions")
    assert ok


def test_criterion_06_utilization_matches_scan():
    rng = np.random.default_rng(6)
    worst_u = worst_f = 0.0
    for _ in range(100):
        dep, sessions = random_sessions(rng)
        flh = compute_flh(sessions, dep)
        util = compute_utilization(sessions, dep)
        for st in dep.stations:
            for t in ChargerType:
                n = st.count(t)
                if n == 0:
                    continue
                mine = [s for s in sessions if s.station_id == st.id and s.charger_type is t]
                scan = occupancy_scan([(s.start, min(s.end, 86400.0)) for s in mine], n)
                worst_f = max(worst_f, abs(flh[(st.id, t)] * 3600.0 - scan))
                expected = sum(s.energy_kwh for s in mine) / (n * t.power_kw * 24.0)
                worst_u = max(worst_u, abs(util.get(st.id, t).utilization - expected))
    ok = worst_u <= 1e-9 and worst_f <= 1.0
    record(6, "utilization and full-load hours vs 1 s scan", ok,
           f"max |du| {worst_u:.1e}, max |dF| {worst_f:.2f}s")
    assert ok


def test_criterion_07_refinement_terminates(scenario, pipeline):
    runs, _ = pipeline
    cfg = RefineConfig()
    notes, ok = [], True
    for regime, run in runs.items():
        sizes = [len(it.deployment) for it in run.trace.iterations] + [len(run.refined)]
        monotone = all(a >= b for a, b in zip(sizes, sizes[1:]))
        _, again = refine_loop(scenario, regime, run.refined, config=cfg, seed=SEED)
        fixed = (again.converged and len(again.iterations) == cfg.stop_after and again.final == run.refined)
        ok &= run.trace.converged and len(run.trace.iterations) <= cfg.max_iterations and monotone and fixed
        notes.append(f"{regime.value}: {len(run.trace.iterations)} it, stations {sizes[0]}->{sizes[-1]}, "
                     f"fixed point {'ok' if fixed else 'broken'}")
    record(7, "refinement terminates, station count never grows", ok, "; ".join(notes))
    assert ok


def test_criterion_08_refinement_direction(pipeline):
    runs, _ = pipeline
    failures, notes = [], []
    for regime, run in runs.items():
        before, after = run.cmclp_kpi, run.ref_kpi
        tag = regime.value
        if not after.deployment_cost < before.deployment_cost:
            failures.append(f"{tag} cost")
        rev = (after.revenue - before.revenue) / before.revenue if before.revenue else float("nan")
        if not abs(rev) <= 0.05:
            failures.append(f"{tag} revenue")
        notes.append(f"{tag}: cost {before.deployment_cost:.0f}->{after.deployment_cost:.0f}, "
                     f"revenue {100 * rev:+.1f}%")
        if regime is Regime.COMBINED:
            if after.detour_cost > before.detour_cost:
                failures.append("combined detour")
            notes.append(f"combined detour {before.detour_cost:.2f}->{after.detour_cost:.2f}")
    ok = not failures
    record(8, "refinement lowers cost, keeps revenue, no worse detours", ok,
           "; ".join(notes) + (f"; failed: {', '.join(failures)}" if failures else ""))
    assert ok, failures


def test_criterion_09_cost_compositions():
    cost = CostModel()
    ac = deployment_cost(Deployment((Station(0, 0, 0.0, 0.0, (1, 0, 0)),)), cost)
    dc = deployment_cost(Deployment((Station(0, 0, 0.0, 0.0, (0, 0, 1)),)), cost)
    ok = round(ac, 2) == 7.08 and round(dc, 2) == 80.50 and abs(ac - 7.08) < 1e-9 and abs(dc - 80.50) < 1e-9
    record(9, "daily cost compositions", ok, f"AC site {ac:.10g}, DC site {dc:.10g}")
    assert ok


def test_criterion_10_pipeline_runtime(pipeline):
    runs, seconds = pipeline
    ok = seconds < 300.0 and len(runs) == 3
    record(10, "six layouts in under five minutes", ok, f"{seconds:.1f}s on this machine")
    assert ok
