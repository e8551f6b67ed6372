import numpy as np
import pytest

from xp_lab.config import JobConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: exhaustive oracles over the larger desk primes")


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def make_config():
    """JobConfig factory with small sample counts."""
    def _make(command: str = "verify geometry", **overrides) -> JobConfig:
        values = {"command": command, "p_list": [7], "samples": 4, "jobs": 1}
        values.update(overrides)
        return JobConfig(**values)
    return _make
