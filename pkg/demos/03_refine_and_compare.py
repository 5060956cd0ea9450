"""
Refining with simulated usage
=============================

The covering model only sees latent demand. Running the day against the
real plugs shows which chargers sit idle and which are saturated; chargers
used below 5% of their capacity are removed and those fully occupied for
two hours or more gain a sibling, until the layout stops changing.

Run with an output directory to also get the KPI table and session plots::

    python demos/03_refine_and_compare.py /tmp/evdeploy-demo
"""

import sys
from pathlib import Path

from evdeploy.metrics import comparison_table
from evdeploy.pipeline import reports, run_all
from evdeploy.scenario import generate_scenario, reference_config

scenario = generate_scenario(reference_config())
runs = run_all(scenario, seed=42)

for regime, run in runs.items():
    sizes = [len(it.deployment) for it in run.trace.iterations]
    print(f"{regime.value:12s} stations per iteration {sizes} -> {len(run.refined)} "
          f"(converged={run.trace.converged})")

table = comparison_table(reports(runs))
print(table)

if len(sys.argv) > 1:
    from evdeploy.plots import session_histograms

    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(table)
    sources = {}
    for run in runs.values():
        for kpi, log in ((run.cmclp_kpi, run.cmclp_log), (run.ref_kpi, run.ref_log)):
            log.save(out / kpi.label)
            sources[kpi.label] = out / kpi.label
    for path in session_histograms(sources, out):
        print("wrote", path)
