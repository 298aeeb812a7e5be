from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from covadj.data import TrialDataset, load_csv
from covadj.glm import fit_with_fallback
from covadj.standardization import standardize

FIXTURES = Path(__file__).parent / "fixtures"
FIXTURE_COVARIATES = ("x_cont", "x_cat", "x_age")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")
    config._criteria = {}


def load_fixture(name: str):
    return json.loads((FIXTURES / name).read_text())


@pytest.fixture(scope="session")
def trial200() -> TrialDataset:
    return load_csv(FIXTURES / "trial200.csv", "y", "z", FIXTURE_COVARIATES)


@pytest.fixture(scope="session")
def fit200(trial200):
    return fit_with_fallback(trial200)


@pytest.fixture(scope="session")
def std200(fit200):
    return standardize(fit200)


def random_trial(rng: np.random.Generator, n: int | None = None, k: int | None = None) -> TrialDataset:
    """Small random trial with a logistic outcome and k continuous covariates."""
    n = int(rng.integers(40, 200)) if n is None else n
    k = int(rng.integers(0, 4)) if k is None else k
    while True:
        w = rng.standard_normal((n, k))
        z = (rng.random(n) < 0.5).astype(float)
        beta = rng.normal(0.0, 0.7, k)
        eta = rng.normal(-0.3, 0.5) + rng.normal(0.0, 0.7) * z + w @ beta
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        # each arm needs both outcomes or the MLE does not exist
        if all(0 < y[z == a].sum() < (z == a).sum() for a in (0.0, 1.0)):
            return TrialDataset(y, z, w, tuple(f"w{j}" for j in range(k)))


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    table = item.config._criteria
    status = table.get(number, (title, "PASS"))[1]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if rep.skipped and status == "PASS":
            status = "SKIP"
        elif rep.failed:
            status = "FAIL"
    table[number] = (title, status)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = getattr(config, "_criteria", {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        title, status = table[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")
