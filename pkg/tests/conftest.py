import numpy as np
import pytest

from hrsae.datamodel import Domain, Population
from hrsae.orderprob import fit_eta, mc_order_probs, theta_from_probs
from hrsae.sampling import DesignSpec


@pytest.fixture(scope="session")
def fixture6():
    """N=6, n=3 population with y, domain of 3 units and Monte-Carlo theta."""
    rng = np.random.default_rng(2024)
    z = rng.normal(5, 1, 6)
    x = z + rng.normal(0, 0.8, 6)
    y = 2 + x + rng.normal(0, 0.6, 6)
    pop = Population.from_arrays(z, x, y)
    D = Domain.from_ids(pop, [2, 3, 5])
    theta = theta_from_probs(mc_order_probs(fit_eta(pop.z, pop.x), pop.z, 50_000, 1), D)
    return pop, D, theta, DesignSpec(3, 6)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(rep, "when", "call") == "call":
                lines.append((nodeid.split("::")[-1], outcome.upper()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, outcome in sorted(lines):
            terminalreporter.write_line(f"{'PASS' if outcome == 'PASSED' else 'FAIL'}  {name}")
