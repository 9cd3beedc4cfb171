import numpy as np
import pytest
from hypothesis import settings

from dnn_mpbsbl.config import SystemConfig
from dnn_mpbsbl.pilots import build_system

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk_cfg():
    return SystemConfig.desk()


@pytest.fixture(scope="session")
def desk(desk_cfg):
    return build_system(desk_cfg)


@pytest.fixture(scope="session")
def paper_cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def paper(paper_cfg):
    return build_system(paper_cfg)


@pytest.fixture(scope="session")
def tiny_cfg():
    # K=4, N=2, Lt=3, dc=1: small enough for exhaustive finite differences
    return SystemConfig(K=4, N=2, Lt=3, dc=1, Nit=2, Pa=0.5)


@pytest.fixture(scope="session")
def tiny(tiny_cfg):
    return build_system(tiny_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
