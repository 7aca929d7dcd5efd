import hypothesis
import numpy as np
import pytest

from cpl.observers import ExternalObserver, InternalObserver, IslandObserver, observe
from cpl.reference import eight_node_graph, five_agent_graph, reference_scenario

hypothesis.settings.register_profile("default", deadline=None, max_examples=25)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=5)
hypothesis.settings.load_profile("default")

np.seterr(all="raise", under="ignore")


@pytest.fixture(scope="session")
def reference_graph():
    return five_agent_graph()


@pytest.fixture(scope="session")
def eight_node():
    return eight_node_graph()


@pytest.fixture(scope="session")
def reference():
    """Five-agent scenario with the cancelling chirp perturbations, T = 30."""
    return reference_scenario(horizon=30.0)


@pytest.fixture(scope="session")
def reference_observed(reference):
    """One run carrying every observer used across the suite."""
    specs = {
        "internal4": InternalObserver(1, 4),
        "internal5": InternalObserver(1, 5),
        "external2": ExternalObserver(2, intercepted=frozenset({2, 3})),
        "external4_eta5": ExternalObserver(4, eta0=5.0),
        "island123": IslandObserver(1, frozenset({1, 2, 3})),
    }
    tr, runs = observe(reference, specs.values())
    return tr, dict(zip(specs, runs))


acceptance_key = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[acceptance_key] = {}


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    return pytestconfig.stash[acceptance_key]


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(acceptance_key, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title, detail = results[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}  {title}: {detail}")
