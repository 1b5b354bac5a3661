import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shm_edge.pipeline import PipelineConfig, train_pipeline
from shm_edge.signal import windowize
from shm_edge.synth import BridgeSimConfig, generate_campaign

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_campaign():
    """Shortened default campaign: 4 h train, 2 h val, 2 h of each test state."""
    c = generate_campaign(BridgeSimConfig(seed=7), train_h=4, val_h=2, test_h=2)
    return {name: windowize(getattr(c, name), 5.0) for name in ("train", "val", "test_normal", "test_anomalous")}


@pytest.fixture(scope="session")
def small_pipeline(small_campaign):
    return train_pipeline(small_campaign["train"], small_campaign["val"], PipelineConfig())


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
