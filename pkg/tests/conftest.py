import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from handsynth.dataset import generate
from handsynth.poses import default_library
from handsynth.scene import GenerationConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def library():
    return default_library()


@pytest.fixture(scope="session")
def config():
    return GenerationConfig()


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """24 rendered and augmented samples, shared read-only across tests."""
    out = tmp_path_factory.mktemp("ds24")
    manifest = generate(GenerationConfig(), 11, 24, str(out), threads=2)
    return out, manifest


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
