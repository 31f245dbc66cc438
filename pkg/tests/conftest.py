import time
import warnings

import pytest

from chipdress.cli import interferometer_config_path
from chipdress.core import load_config

ACCEPTANCE_LINES: list[str] = []


def report(line: str) -> None:
    """Record an acceptance line; all of them are repeated in the terminal summary."""
    ACCEPTANCE_LINES.append(line)
    print(line)


SUITE_BUDGET_S = 600.0
_START = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
        wall = time.perf_counter() - _START
        ok = "PASS" if wall < SUITE_BUDGET_S else "FAIL"
        terminalreporter.write_line(f"CRITERION 6 runtime {ok}: session wall time {wall:.0f} s "
                                    f"(< {SUITE_BUDGET_S:.0f} s)")


@pytest.fixture(scope="session")
def cfg():
    """Bundled splitting configuration (ideal CPW mode, 150 kHz, 120 mW)."""
    return load_config()


@pytest.fixture(scope="session")
def icfg():
    """Bundled interferometer configuration (asymmetric mode, 600 kHz)."""
    return load_config(interferometer_config_path())


@pytest.fixture(scope="session")
def lines(icfg):
    from chipdress.dynamics import line_potentials
    return line_potentials(icfg)


@pytest.fixture(scope="session")
def setup(icfg, lines):
    from chipdress.dynamics import prepare_ramsey
    return prepare_ramsey(icfg, lines)


@pytest.fixture(scope="session")
def ramsey_full(icfg, setup):
    from chipdress.dynamics import ramsey_scan
    return ramsey_scan(icfg, setup=setup)


@pytest.fixture(scope="session")
def phase_ctx(icfg, lines):
    from chipdress.noise import PhaseContext
    ctx = PhaseContext(icfg, lines.x, icfg.dynamics.dt)
    ctx.cache[(None, 0.0)] = lines
    return ctx


@pytest.fixture(autouse=True)
def _quiet_validity_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="perturbative limit outside validity")
        yield


@pytest.fixture(scope="session")
def sensitivities(icfg, phase_ctx):
    """dphi/dB and dphi/dP at the configured noise T_R (step studies included)."""
    from chipdress.noise import sensitivity
    T = icfg.noise.TR
    return {"B": sensitivity(icfg, T, "B", phase_ctx), "P": sensitivity(icfg, T, "P", phase_ctx)}
