import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kglab.core import DataSpec, Radii, RunConfig, make_damping, make_grid, zero_damping  # noqa: E402
from kglab.evolution import default_ground_state, required_domain, run, support_radius  # noqa: E402


@pytest.fixture(scope="session")
def gs():
    return default_ground_state()


def small_run(amplitude=0.05, shape="exterior-plateau", dr=0.05, T=10.0, sigma=1.0, family="gaussian",
              lambda0=0.5, lambda1=1.0, R=2.0, linear=False, sample_dt=0.1, ground_state=None):
    """A run sized by the light-cone rule with samples every ``sample_dt``."""
    data = DataSpec(family, amplitude, sigma)
    support = support_radius(data, ground_state)
    n = int(np.ceil(required_domain(support, T, 2.0) / dr)) + 1
    n = max(n, int(np.ceil(max(8 * R, 2 * support) / dr)) + 1)
    grid = make_grid((n - 1) * dr, n)
    if shape == "none":
        damping = zero_damping(grid)
    else:
        damping = make_damping(shape, lambda0, lambda1, R, grid)
    dt = 0.5 * dr
    cadence = max(1, int(round(sample_dt / dt)))
    cfg = RunConfig(grid, damping, data, dt, T, cadence=cadence, radii=Radii(R), linear=linear, support=support)
    return run(cfg, ground_state)


@pytest.fixture
def grid():
    return make_grid(10.0, 201)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
