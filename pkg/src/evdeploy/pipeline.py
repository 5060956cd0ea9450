"""Two-stage deployment pipeline: latent demand, CMCLP siting, refinement, evaluation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .charging import ChargingBehaviorParams
from .cmclp import (CmclpInstance, CmclpSolution, CostModel, SolveReport, build_instance, solve_exact,
                    solve_heuristic, verify_solution)
from .metrics import KpiReport, Rates, evaluate_kpis
from .refine import RefineConfig, RefineTrace, refine_loop
from .scenario import ScenarioBundle
from .simulator import Deployment, EventLog, LatentDemandEvent, Mode, Regime, simulate_day

REGIME_LETTER = {Regime.DESTINATION: "D", Regime.ENROUTE: "E", Regime.COMBINED: "C"}


class InvariantError(RuntimeError):
    """A solver or simulator output broke one of its own guarantees."""


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def deployment_hash(deployment: Deployment) -> str:
    return text_hash(deployment.to_csv())


def label(kind: str, regime: Regime | str) -> str:
    """``CMCLP-D``, ``REF-C`` and so on."""
    return f"{kind}-{REGIME_LETTER[Regime(regime)]}"


def latent_demand(scenario: ScenarioBundle, regime: Regime | str, seed: int = 0,
                  params: Optional[ChargingBehaviorParams] = None) -> EventLog:
    return simulate_day(scenario, regime, Mode.LATENT, None, params, seed)


@dataclass(frozen=True)
class DeployResult:
    instance: CmclpInstance
    solution: CmclpSolution
    report: SolveReport
    deployment: Deployment


def deploy(events: Sequence[LatentDemandEvent], cost: CostModel = CostModel(), solver: str = "heuristic",
           radius_km: float = 1.0) -> DeployResult:
    """Solve the covering problem over ``events`` and check the result before returning it."""
    instance = build_instance(events, cost, radius_km)
    if solver == "exact":
        solution, report = solve_exact(instance)
    elif solver == "heuristic":
        solution, report = solve_heuristic(instance)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    problems = verify_solution(instance, solution)
    if problems:
        raise InvariantError("solver output violates the model: " + "; ".join(str(p) for p in problems[:5]))
    return DeployResult(instance, solution, report, solution.to_deployment(instance))


def evaluate(scenario: ScenarioBundle, regime: Regime | str, deployment: Deployment, seed: int = 0,
             params: Optional[ChargingBehaviorParams] = None, cost: CostModel = CostModel(),
             rates: Rates = Rates(), name: str = "") -> tuple[EventLog, KpiReport]:
    regime = Regime(regime)
    log = simulate_day(scenario, regime, Mode.EVALUATION, deployment, params, seed)
    kpi = evaluate_kpis(log, deployment, scenario.network, cost, rates, label=name, regime=regime.value,
                        scenario_hash=scenario.content_hash(), deployment_hash=deployment_hash(deployment))
    return log, kpi


@dataclass(frozen=True)
class RegimeRun:
    regime: Regime
    latent: EventLog
    cmclp: DeployResult
    cmclp_log: EventLog
    cmclp_kpi: KpiReport
    refined: Deployment
    trace: RefineTrace
    ref_log: EventLog
    ref_kpi: KpiReport


def run_regime(scenario: ScenarioBundle, regime: Regime | str, seed: int = 0, cost: CostModel = CostModel(),
               solver: str = "heuristic", config: RefineConfig = RefineConfig(),
               params: Optional[ChargingBehaviorParams] = None, rates: Rates = Rates()) -> RegimeRun:
    regime = Regime(regime)
    params = params or scenario.behavior
    latent = latent_demand(scenario, regime, seed, params)
    result = deploy(latent.latent, cost, solver, params.service_radius_km)
    log0, kpi0 = evaluate(scenario, regime, result.deployment, seed, params, cost, rates, label("CMCLP", regime))
    refined, trace = refine_loop(scenario, regime, result.deployment, params, config, seed, cost, rates)
    log1, kpi1 = evaluate(scenario, regime, refined, seed, params, cost, rates, label("REF", regime))
    return RegimeRun(regime, latent, result, log0, kpi0, refined, trace, log1, kpi1)


def run_all(scenario: ScenarioBundle, regimes: Iterable[Regime | str] = tuple(Regime), **kwargs
            ) -> dict[Regime, RegimeRun]:
    """All six layouts (CMCLP and REF for each regime) on one scenario."""
    return {Regime(r): run_regime(scenario, r, **kwargs) for r in regimes}


def reports(runs: dict[Regime, RegimeRun]) -> dict[str, KpiReport]:
    out = {}
    for run in runs.values():
        out[run.cmclp_kpi.label] = run.cmclp_kpi
    for run in runs.values():
        out[run.ref_kpi.label] = run.ref_kpi
    return out
