"""Shared fixtures and the acceptance-line reporter.

Acceptance tests register a one-line verdict through ``record_criterion``;
the terminal-summary hook prints every registered line at the end of the
run so the criterion outcomes are visible without digging through the
pytest output.
"""

import functools

import numpy as np
import pytest

from twostage import ScenarioConfig, TrialDataset, generate

_CRITERION_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    line = f"[{status}] {name}"
    if detail:
        line += f" :: {detail}"
    _CRITERION_LINES.append(line)


def criterion(name: str):
    """Wrap an acceptance test so it always records a PASS/FAIL line."""

    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException:
                record_criterion(name, False)
                raise
            record_criterion(name, True, detail if isinstance(detail, str) else "")

        return wrapper

    return decorate


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for line in _CRITERION_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_dataset(n=200, m=8, seed=0, family="linear", interaction=0.0,
                 main=0.0, noise_sd=1.0):
    """Small synthetic trial with at most one active biomarker (index 0)."""
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, m))
    t = (r.random(n) < 0.5).astype(float)
    eta = 0.5 * t + main * x[:, 0] + interaction * x[:, 0] * t
    if family == "logistic":
        y = (r.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    else:
        y = eta + noise_sd * r.standard_normal(n)
    return TrialDataset(outcome=y, treatment=t, biomarkers=x, family=family)


@pytest.fixture
def small_linear_dataset():
    return make_dataset(n=300, m=6, seed=11, interaction=1.0, main=0.5)


@pytest.fixture
def null_scenario():
    return ScenarioConfig(
        n=200, m=20, cluster_size=4, rho=0.0,
        effects=(), noise_sd=1.0, seed=0, label="null",
    )
