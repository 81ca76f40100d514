from __future__ import annotations

import pytest

from wozlab.scene import Scenario, ScenarioRepo


@pytest.fixture(scope="session")
def repo() -> ScenarioRepo:
    return ScenarioRepo()


@pytest.fixture(scope="session")
def shopping(repo) -> Scenario:
    scenario = repo.get("shopping")
    assert scenario is not None
    return scenario


@pytest.fixture(scope="session")
def navigation(repo) -> Scenario:
    scenario = repo.get("navigation")
    assert scenario is not None
    return scenario
