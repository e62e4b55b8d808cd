import numpy as np
import pytest

from vltok.bench.data import generate_dataset
from vltok.config import TrackerConfig
from vltok.pipeline import init_model
from vltok.textenc import build_vocab


@pytest.fixture(scope="session")
def toy_cfg():
    return TrackerConfig()


@pytest.fixture(scope="session")
def tiny_seqs():
    return generate_dataset(3, 11, "easy", length=5)


@pytest.fixture(scope="session")
def tiny_vocab(tiny_seqs):
    return build_vocab([s.caption for s in tiny_seqs])


@pytest.fixture
def toy_model(toy_cfg, tiny_vocab):
    return init_model(toy_cfg, tiny_vocab.size, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# pass/fail line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_RESULTS: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)
