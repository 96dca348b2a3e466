from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from precision_spectrum.model import PopulationSpectrum, SampleSpectrum, make_population, population_from_fractions

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

C_A = 3 / 20
C_B = 3 / 8
C_C = 0.5


def fixture_a(N: int = 240) -> PopulationSpectrum:
    return population_from_fractions([1, 3, 7], ["1/2", "1/4", "1/4"], N)


def fixture_b(N: int = 240) -> PopulationSpectrum:
    return population_from_fractions([1, 2, 3], ["1/3", "1/3", "1/3"], N)


def fixture_c() -> PopulationSpectrum:
    return make_population([1, 5], [40, 20])


def fixture_i(N: int = 8) -> PopulationSpectrum:
    return make_population([1], [N])


def rho_sample(rho, K: int) -> SampleSpectrum:
    rho = np.asarray(rho, dtype=float)
    return SampleSpectrum(np.sort(1.0 / rho), rho, K)


@pytest.fixture
def spec_a():
    return fixture_a()


@pytest.fixture
def spec_b():
    return fixture_b()


@pytest.fixture
def spec_c():
    return fixture_c()


@pytest.fixture
def small_sample():
    """rho = (4, 3, 2, 1), K = 8 (c = 1/2)."""
    return rho_sample([4.0, 3.0, 2.0, 1.0], 8)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Store and print one acceptance verdict line."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
