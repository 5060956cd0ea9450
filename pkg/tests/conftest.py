import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evdeploy.scenario import generate_scenario, reference_config, ScenarioConfig  # noqa: E402


@pytest.fixture(scope="session")
def reference():
    return generate_scenario(reference_config())


@pytest.fixture(scope="session")
def small():
    """A 4x4 grid with 60 households, every vehicle electric and half-empty."""
    return generate_scenario(ScenarioConfig(grid_rows=4, grid_cols=4, n_households=60, ev_penetration=1.0,
                                            initial_soc=0.35, initial_soc_spread=0.3, seed=7))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
