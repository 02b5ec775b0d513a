from __future__ import annotations

import json
from importlib import resources

import pytest

from emocog.domain import ScenarioConfig
from emocog.policies import ScriptedBackend

# Lines collected by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def income_greedy_fixture() -> dict:
    return json.loads(resources.files("emocog").joinpath("data/income_greedy.json").read_text(encoding="utf-8"))


@pytest.fixture
def greedy_backend() -> ScriptedBackend:
    return ScriptedBackend.from_mapping(income_greedy_fixture())


@pytest.fixture
def small_cfg() -> ScenarioConfig:
    return ScenarioConfig(n_days=2)
