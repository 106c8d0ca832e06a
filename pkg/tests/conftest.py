import numpy as np
import pytest

from drljrm.scenario import Scenario


def make_scenario(gains, *, weights=None, qos_min=None, total_power=1.0, noise_var=1.0,
                  pdsc_threshold=0.0, sic_error_sq=0.0, bandwidth=1.0, max_per_subcarrier=None):
    """Hand-built scenario with unit defaults, for exact arithmetic."""
    g = np.atleast_2d(np.asarray(gains, dtype=np.float64))
    m = g.shape[1]
    return Scenario(
        gains=g,
        distances=np.arange(1.0, m + 1.0),
        weights=np.ones(m) if weights is None else weights,
        qos_min=np.zeros(m) if qos_min is None else qos_min,
        total_power=total_power,
        noise_var=noise_var,
        pdsc_threshold=pdsc_threshold,
        sic_error_sq=sic_error_sq,
        bandwidth=bandwidth,
        max_per_subcarrier=m if max_per_subcarrier is None else max_per_subcarrier,
    )


@pytest.fixture
def scenario_factory():
    return make_scenario


# acceptance lines, echoed in the terminal summary so they survive output capture
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    def record(number: int, title: str, checks) -> bool:
        passed = all(c.passed for c in checks)
        detail = "; ".join(f"{c.name}={c.value:.6g} (limit {c.threshold:g})" for c in checks)
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
