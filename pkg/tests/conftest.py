import sys
from pathlib import Path

import pytest

from testmap.classfile import load_inputs
from testmap.pipeline import analyze

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures" / "classes"
CORPUS = FIXTURES / "corpus"
REFACTOR_BEFORE = FIXTURES / "refactor_before"
REFACTOR_AFTER = FIXTURES / "refactor_after"
GUAVA = TESTS / "data" / "guava-33.6.0-jre.jar"

sys.path.insert(0, str(TESTS))


@pytest.fixture(scope="session")
def corpus_pool():
    return load_inputs([CORPUS])


@pytest.fixture(scope="session")
def corpus_analysis():
    return analyze([CORPUS])


@pytest.fixture(scope="session")
def corpus_records(corpus_analysis):
    return {r["id"]: r for r in corpus_analysis.records}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end run on a large real jar")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
