import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=30, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def digits_dir(tmp_path_factory):
    """IDX digit files: VHEAT_MNIST_DIR if set, else the bundled 5k subset."""
    env = os.environ.get("VHEAT_MNIST_DIR")
    if env:
        return env
    pytest.importorskip("mlxtend")
    from vheat.data import digits_idx_dir

    return str(digits_idx_dir(tmp_path_factory.mktemp("digits")))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import INFO, RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS + INFO:
            terminalreporter.write_line(line)
