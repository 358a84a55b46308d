"""Shared fixtures and the acceptance-criteria summary printed after the run."""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings

from sqzring.config import load_config
from sqzring.modes import CrossSectionGrid, solve_modes

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

# criterion number -> title; outcomes collected per criterion
CRITERIA = {
    1: "shot-noise fixed point",
    2: "closed form vs Langevin matrix oracle",
    3: "eigenvalue degeneracy on the resonant-follow line",
    4: "bistability onset and unstable interval",
    5: "steady-state cubic vs dense sign scan",
    6: "headline squeezing at -1 dB/cm",
    7: "low-loss squeezing and purity",
    8: "squeezing bandwidth",
    9: "interaction strength",
    10: "mode solver accuracy",
    11: "overlap and taper formulas",
    12: "sweep determinism across worker counts",
}
_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            item.user_properties.append(("criterion", marker.args[0]))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(crit, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} [{status}] {title} ({len(results or [])} tests)")


@pytest.fixture(scope="session")
def nominal_config():
    return load_config(CONFIG_DIR / "nominal.ini")


@pytest.fixture(scope="session")
def lowloss_config():
    return load_config(CONFIG_DIR / "lowloss.ini")


@pytest.fixture(scope="session")
def bandwidth_config():
    return load_config(CONFIG_DIR / "bandwidth.ini")


@pytest.fixture(scope="session")
def channel_te():
    """Fundamental TE mode of the 250 x 500 nm guide on the 20 nm grid."""
    grid = CrossSectionGrid.channel(500e-9, 250e-9, 20e-9)
    return grid, solve_modes(grid, 850e-9, 1, "TE")[0]
