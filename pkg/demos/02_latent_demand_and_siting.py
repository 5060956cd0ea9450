"""
From activity plans to a first deployment
=========================================

Simulating the reference day with unlimited chargers gives the latent
demand: where and when people would charge if a plug were always there.
Slicing each event into half-hour bins turns it into covering items, and a
budget-limited capacitated covering model places stations to serve as many
items as possible.
"""

from collections import Counter

from evdeploy.cmclp import CostModel, build_instance, solve_exact, solve_heuristic
from evdeploy.pipeline import deploy, latent_demand
from evdeploy.scenario import generate_scenario, reference_config
from evdeploy.simulator import Regime

scenario = generate_scenario(reference_config())
print(f"scenario {scenario.content_hash()}: {len(scenario.ev_ids())} EVs on "
      f"{scenario.network.n_nodes} nodes")

# Latent demand under each charging regime.
logs = {regime: latent_demand(scenario, regime, seed=42) for regime in Regime}
for regime, log in logs.items():
    kinds = Counter(e.charger_type.value for e in log.latent)
    print(f"{regime.value:12s} {len(log.latent):4d} events  {dict(sorted(kinds.items()))}")

# Site chargers for the combined regime with the default daily budget.
result = deploy(logs[Regime.COMBINED].latent, CostModel())
rep = result.report
print(f"covered {rep.objective} of {result.instance.n_items} items with {len(result.deployment)} stations "
      f"for {rep.cost:.2f} AUD/day (budget {result.instance.budget:.0f})")
print("chargers (7.2 kW, 22 kW, 150 kW):", result.deployment.charger_totals())

# On a small slice both solvers can run; the heuristic usually matches.
window = [e for e in logs[Regime.COMBINED].latent if e.x <= 1.0 and e.y <= 1.0][:12]
small = build_instance(window, CostModel(budget=60.0))
if small.n_sites <= 8 and small.n_items <= 40:
    exact, _ = solve_exact(small)
    heur, _ = solve_heuristic(small)
    print(f"slice of {small.n_items} items on {small.n_sites} sites: exact {exact.objective}, "
          f"heuristic {heur.objective}")
