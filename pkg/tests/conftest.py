"""Shared fixtures and instance generators."""

import numpy as np
import pytest

from noma_ee.channel import noise_power
from noma_ee.cluster import ClusterInstance, min_powers

NOISE = noise_power(-174.0, 180e3)
CIRCUIT_PER_USER = 1e-3

# strong / middle / weak users of the reference three-user cluster
REFERENCE_GAINS = (1.10e-9, 1.34e-10, 4.25e-11)


def random_cluster(rng, size, min_rate=None, max_power=None, feasible=True, tries=1000):
    """Draw a cluster with log-uniform gains; redraw until feasible when asked."""
    for _ in range(tries):
        gains = np.sort(10.0 ** rng.uniform(-11.5, -8.5, size))[::-1]
        rates = rng.uniform(0.0, 2.0, size) if min_rate is None else min_rate
        pmax = 10.0 ** rng.uniform(-6.0, 0.0, size) if max_power is None else max_power
        inst = ClusterInstance(gains, rates, pmax, CIRCUIT_PER_USER * size, NOISE)
        if not feasible or min_powers(inst).feasible:
            return inst
    raise RuntimeError("no feasible instance drawn")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def reference_cluster(pmax_w, gains=REFERENCE_GAINS, min_rate=1.5):
    return ClusterInstance(np.asarray(gains), min_rate, pmax_w,
                           CIRCUIT_PER_USER * len(gains), NOISE)


# one line per acceptance criterion, echoed after the test session
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
