from pathlib import Path

import pytest

from agilemdd.cli import default_constraints, default_model, default_ontology, fixtures_dir
from agilemdd.constraints import load_constraints
from agilemdd.ontology import load_ontology
from agilemdd.plantuml import load_model

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def fixtures():
    return fixtures_dir()


@pytest.fixture(scope="session")
def model():
    m, diags = load_model(default_model())
    assert not [d for d in diags if d.severity == "error"]
    return m


@pytest.fixture(scope="session")
def registry():
    return load_ontology(default_ontology())


@pytest.fixture(scope="session")
def constraint_set():
    cons, diags = load_constraints(default_constraints())
    assert not diags
    return cons


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(test_acceptance.RESULTS):
        terminalreporter.write_line(test_acceptance.line(k))
