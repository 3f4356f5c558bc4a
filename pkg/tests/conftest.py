import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from imcverify.io import load_config

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS


@pytest.fixture(scope="session")
def benchmark():
    """X+ = 0.5 X + 0.5 w on [-1, 1] with goal [0.5, 1]."""
    return load_config(CONFIGS / "benchmark1d.toml").spec


# acceptance criteria report: one line per criterion in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
