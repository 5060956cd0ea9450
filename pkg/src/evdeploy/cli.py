"""Command line entry point: ``evdeploy {generate,demand,deploy,refine,evaluate,compare}``.

Stages hand off through files. Tables are comma-separated with a one-line
header; reports and sidecars are JSON carrying a ``schema`` field and the
content hashes of their inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

from .charging import ChargingBehaviorParams, ConfigurationError, SimulationError
from .cmclp import CostModel, InputError, InstanceTooLarge, deployment_cost
from .metrics import KpiReport, comparison_table
from .pipeline import (InvariantError, deploy, deployment_hash, evaluate, latent_demand, text_hash)
from .refine import ConsistencyError, RefineConfig, refine_loop
from .scenario import ScenarioBundle, ScenarioConfig, generate_scenario, reference_config
from .simulator import Deployment, Regime, UsageError, read_latent_events

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
META_SCHEMA = "evdeploy.meta"


class CliUsageError(Exception):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Settings shared by the stage commands; flags given on the command line win."""

    scenario: dict = field(default_factory=dict)  # ScenarioConfig overrides for ``generate``
    regime: Optional[str] = None
    budget: Optional[float] = None
    seed: Optional[int] = None
    refine: dict = field(default_factory=dict)  # RefineConfig overrides
    behavior: dict = field(default_factory=dict)  # ChargingBehaviorParams overrides

    @classmethod
    def load(cls, path: Optional[str]) -> "PipelineConfig":
        if path is None:
            return cls()
        data = json.loads(Path(path).read_text())
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def behavior_params(self, base: ChargingBehaviorParams) -> ChargingBehaviorParams:
        if not self.behavior:
            return base
        merged = {**base.to_dict(), **self.behavior}
        return ChargingBehaviorParams.from_dict(merged)

    def refine_config(self) -> RefineConfig:
        try:
            return RefineConfig(**self.refine)
        except TypeError as exc:
            raise ConfigurationError(f"bad refine config: {exc}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which is reserved for input errors
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _meta(kind: str, out: Path, **payload) -> None:
    doc = {"schema": META_SCHEMA, "kind": kind, **payload}
    (out / f"{kind}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _read_meta(directory: Path, kind: str) -> dict:
    path = directory / f"{kind}.json"
    return json.loads(path.read_text()) if path.exists() else {}


def _outdir(path: Optional[str], default: str) -> Path:
    out = Path(path or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg: PipelineConfig) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.seed if cfg.seed is not None else 0


def _regime(args, cfg: PipelineConfig) -> Regime:
    value = args.regime or cfg.regime
    if value is None:
        raise CliUsageError("--regime is required")
    try:
        return Regime(value)
    except ValueError:
        raise CliUsageError(f"unknown regime {value!r}") from None


def _scenario(args) -> tuple[ScenarioBundle, str]:
    if not args.scenario:
        raise CliUsageError("--scenario is required")
    bundle = ScenarioBundle.load(args.scenario)
    return bundle, bundle.content_hash()


def _deployment_file(path: Path) -> Path:
    return path / "deployment.csv" if path.is_dir() else path


# -- commands ---------------------------------------------------------------


def cmd_generate(args, cfg: PipelineConfig) -> int:
    overrides = dict(cfg.scenario)
    if args.seed is not None:
        overrides["seed"] = args.seed
    elif cfg.seed is not None:
        overrides["seed"] = cfg.seed
    if args.grid:
        try:
            rows, cols = (int(v) for v in args.grid.lower().split("x"))
        except ValueError:
            raise CliUsageError(f"--grid expects ROWSxCOLS, got {args.grid!r}") from None
        overrides.update(grid_rows=rows, grid_cols=cols)
    if args.households is not None:
        overrides["n_households"] = args.households
    base = ScenarioConfig() if args.preset == "default" else reference_config()
    config = ScenarioConfig.from_dict({**base.to_dict(), **overrides})
    if cfg.behavior:
        config = replace(config, behavior=cfg.behavior_params(config.behavior))
    bundle = generate_scenario(config)
    out = Path(args.out or "scenario.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    bundle.save(out)
    evs = bundle.ev_ids()
    homes = sum(h.home_charger for h in bundle.households)
    print(f"scenario {bundle.content_hash()}: {bundle.network.n_nodes} nodes, {len(bundle.tazs)} TAZs, "
          f"{len(bundle.households)} households, {len(bundle.vehicles)} vehicles, {len(evs)} EVs, "
          f"{homes} home chargers -> {out}")
    return EXIT_OK


def cmd_demand(args, cfg: PipelineConfig) -> int:
    bundle, shash = _scenario(args)
    regime = _regime(args, cfg)
    seed = _seed(args, cfg)
    params = cfg.behavior_params(bundle.behavior)
    log = latent_demand(bundle, regime, seed, params)
    out = _outdir(args.out, "demand")
    log.save(out)
    counts = {tag: sum(e.tag == tag for e in log.latent) for tag in ("destination", "enroute")}
    _meta("demand", out, scenario_hash=shash, regime=regime.value, seed=seed,
          latent_events=len(log.latent), by_tag=counts,
          latent_hash=text_hash(log.tables()["latent_demand.csv"]))
    print(f"{len(log.latent)} latent events ({counts['destination']} destination, "
          f"{counts['enroute']} en-route) -> {out}")
    return EXIT_OK


def cmd_deploy(args, cfg: PipelineConfig) -> int:
    if not args.demand:
        raise CliUsageError("--demand is required")
    demand = Path(args.demand)
    table = demand / "latent_demand.csv" if demand.is_dir() else demand
    text = table.read_text()
    events = read_latent_events(text)
    upstream = _read_meta(table.parent, "demand")
    budget = args.budget if args.budget is not None else cfg.budget
    cost = CostModel() if budget is None else CostModel(budget=budget)
    if cost.budget == 0:
        print("warning: budget is 0, the deployment will be empty", file=sys.stderr)
    radius = cfg.behavior_params(ChargingBehaviorParams()).service_radius_km
    result = deploy(events, cost, args.solver, radius)
    out = _outdir(args.out, "deploy")
    result.deployment.save(out / "deployment.csv")
    rep = result.report
    _meta("deploy", out, scenario_hash=upstream.get("scenario_hash", ""), regime=upstream.get("regime", ""),
          demand_hash=text_hash(text), deployment_hash=deployment_hash(result.deployment),
          budget=cost.budget, items=result.instance.n_items, sites=result.instance.n_sites,
          report={k: v for k, v in rep.to_dict().items() if k != "wall_time_s"})
    kind = "optimal" if rep.optimal else "heuristic, no optimality guarantee"
    print(f"{rep.solver} ({kind}): covered {rep.objective}/{result.instance.n_items} items, "
          f"{len(result.deployment)} stations, cost {rep.cost:.2f} of {cost.budget:.2f} "
          f"in {rep.wall_time_s:.1f}s -> {out}")
    return EXIT_OK


def cmd_refine(args, cfg: PipelineConfig) -> int:
    bundle, shash = _scenario(args)
    regime = _regime(args, cfg)
    seed = _seed(args, cfg)
    if not args.deployment:
        raise CliUsageError("--deployment is required")
    dep_path = _deployment_file(Path(args.deployment))
    initial = Deployment.load(dep_path, bundle.network)
    budget = args.budget if args.budget is not None else cfg.budget
    cost = CostModel() if budget is None else CostModel(budget=budget)
    params = cfg.behavior_params(bundle.behavior)
    final, trace = refine_loop(bundle, regime, initial, params, cfg.refine_config(), seed, cost)
    out = _outdir(args.out, "refine")
    final.save(out / "deployment.csv")
    (out / "refine_trace.csv").write_text(trace.table())
    snaps = out / "iterations"
    snaps.mkdir(exist_ok=True)
    for it in trace.iterations:
        it.deployment.save(snaps / f"deployment_{it.iteration:03d}.csv")
    _meta("refine", out, scenario_hash=shash, regime=regime.value, seed=seed,
          input_deployment_hash=deployment_hash(initial), deployment_hash=deployment_hash(final),
          converged=trace.converged, iterations=len(trace.iterations), objective=trace.objective)
    if not trace.converged:
        print("warning: iteration cap reached without convergence; kept the lowest-cost snapshot",
              file=sys.stderr)
    print(f"{len(trace.iterations)} iterations, converged={trace.converged}: {len(initial)} -> {len(final)} "
          f"stations, cost {deployment_cost(initial, cost):.2f} -> {deployment_cost(final, cost):.2f} -> {out}")
    return EXIT_OK


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    bundle, shash = _scenario(args)
    regime = _regime(args, cfg)
    seed = _seed(args, cfg)
    if not args.deployment:
        raise CliUsageError("--deployment is required")
    dep = Deployment.load(_deployment_file(Path(args.deployment)), bundle.network)
    budget = args.budget if args.budget is not None else cfg.budget
    cost = CostModel() if budget is None else CostModel(budget=budget)
    params = cfg.behavior_params(bundle.behavior)
    log, kpi = evaluate(bundle, regime, dep, seed, params, cost, name=args.label or "")
    out = _outdir(args.out, "evaluate")
    log.save(out)
    (out / "kpi.json").write_text(kpi.to_json())
    print(f"revenue {kpi.revenue:.2f}, deployment cost {kpi.deployment_cost:.2f}, detour cost "
          f"{kpi.detour_cost:.2f}, NSoC vehicles {kpi.nsoc_vehicles}, system cost {kpi.system_cost:.2f} -> {out}")
    return EXIT_OK


def _load_report(item: str) -> tuple[str, KpiReport, Path]:
    """``LABEL=path`` or ``path``; a directory means its ``kpi.json``."""
    name, _, path = item.rpartition("=") if "=" in item else ("", "", item)
    p = Path(path)
    if p.is_dir():
        p = p / "kpi.json"
    report = KpiReport.from_dict(json.loads(p.read_text()))
    return name or report.label or p.parent.name, report, p.parent


def cmd_compare(args, cfg: PipelineConfig) -> int:
    if not args.reports:
        raise CliUsageError("at least one report is required")
    if len(args.reports) > 6:
        raise CliUsageError("at most six reports can be compared")
    loaded = [_load_report(s) for s in args.reports]
    reports = {name: rep for name, rep, _ in loaded}
    if len(reports) != len(loaded):
        raise CliUsageError("report labels must be distinct (use LABEL=path)")
    table = comparison_table(reports)
    out = _outdir(args.out, "compare")
    (out / "comparison.csv").write_text(table)
    _meta("compare", out, scenario_hash=next(iter(reports.values())).scenario_hash,
          reports={name: rep.deployment_hash for name, rep in reports.items()})
    print(table, end="")
    if args.plots:
        from .plots import session_histograms

        written = session_histograms({name: d for name, _, d in loaded}, out)
        for path in written:
            print(f"plot -> {path}")
    return EXIT_OK


# -- wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evdeploy", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario=True, regime=True):
        sp.add_argument("--config", help="pipeline config JSON (scenario/refine/behavior overrides, seed, budget)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        if scenario:
            sp.add_argument("--scenario", help="scenario JSON written by 'generate'")
        if regime:
            sp.add_argument("--regime", choices=[r.value for r in Regime])

    g = sub.add_parser("generate", help="write a synthetic scenario bundle")
    common(g, scenario=False, regime=False)
    g.add_argument("--preset", choices=["reference", "default"], default="reference")
    g.add_argument("--grid", help="ROWSxCOLS")
    g.add_argument("--households", type=int)

    d = sub.add_parser("demand", help="latent demand run")
    common(d)

    dp = sub.add_parser("deploy", help="solve the covering problem over a latent demand table")
    common(dp, scenario=False, regime=False)
    dp.add_argument("--demand", help="latent_demand.csv or the directory holding it")
    dp.add_argument("--budget", type=float)
    dp.add_argument("--solver", choices=["exact", "heuristic"], default="heuristic")

    r = sub.add_parser("refine", help="utilization-driven refinement of a deployment")
    common(r)
    r.add_argument("--deployment")
    r.add_argument("--budget", type=float, help="cost model budget (reporting only)")

    e = sub.add_parser("evaluate", help="evaluation run and KPI report")
    common(e)
    e.add_argument("--deployment")
    e.add_argument("--budget", type=float, help="cost model budget (reporting only)")
    e.add_argument("--label", help="label stored in the report, e.g. CMCLP-D")

    c = sub.add_parser("compare", help="side-by-side table of up to six KPI reports")
    c.add_argument("reports", nargs="*", help="kpi.json files or directories, optionally LABEL=path")
    c.add_argument("--config")
    c.add_argument("--out")
    c.add_argument("--plots", action="store_true", help="also write SVG session histograms")
    return p


COMMANDS = {"generate": cmd_generate, "demand": cmd_demand, "deploy": cmd_deploy, "refine": cmd_refine,
            "evaluate": cmd_evaluate, "compare": cmd_compare}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = PipelineConfig.load(getattr(args, "config", None))
        return COMMANDS[args.command](args, cfg)
    except (CliUsageError, UsageError) as exc:
        print(f"evdeploy {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantError, AssertionError) as exc:
        print(f"evdeploy {args.command}: internal invariant failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ConfigurationError, InputError, InstanceTooLarge, ConsistencyError, SimulationError,
            OSError, ValueError, KeyError, TypeError) as exc:
        print(f"evdeploy {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
