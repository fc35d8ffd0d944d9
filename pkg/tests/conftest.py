import numpy as np
import pytest

from stpn.data import SynthConfig, synth_dataset

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Small synthetic dataset shared by tests that only need something to train on."""
    out = tmp_path_factory.mktemp("small")
    cfg = SynthConfig(num_videos=8, C=3, m=6, raw_T=24, actions_per_video=2)
    return synth_dataset(cfg, seed=3, out_dir=out)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
