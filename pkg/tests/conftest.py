"""Shared fixtures and the acceptance-criterion reporter.

Tests marked ``@pytest.mark.criterion(n, "...")`` get one PASS/FAIL line
per criterion in the terminal summary.
"""

from __future__ import annotations

import numpy as np
import pytest

from aegan.models import ArchitectureConfig
from aegan.rng import Rng

_criterion_results: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n, description): acceptance criterion test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call":
        n, desc = marker.args
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        prev = _criterion_results.get(n)
        if prev is None or prev[0] == "PASS":
            _criterion_results[n] = (status, desc)


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criterion_results):
        status, desc = _criterion_results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status} — {desc}")


@pytest.fixture
def tiny_cfg() -> ArchitectureConfig:
    return ArchitectureConfig(latent_dim=16, image_size=16, channels=3, base_width=8)


@pytest.fixture
def micro_cfg() -> ArchitectureConfig:
    return ArchitectureConfig(latent_dim=4, image_size=8, channels=3, base_width=2)


@pytest.fixture
def rng() -> Rng:
    return Rng(1234)


@pytest.fixture
def np_rng() -> np.random.Generator:
    return np.random.default_rng(98765)
