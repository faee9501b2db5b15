import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seal._accel import tune_allocator
from seal.graph import generate_synthetic, make_splits

tune_allocator()

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


@pytest.fixture(scope="session")
def tiny_bundle():
    return generate_synthetic(12, 3, 5, 0.6, 0.1, 0.7, seed=7)


@pytest.fixture(scope="session")
def syn400():
    """The 400-node, 3-class synthetic bundle used across tests."""
    return generate_synthetic(400, 3, 60, 0.05, 0.005, 0.3, seed=1)


@pytest.fixture(scope="session")
def syn400_splits(syn400):
    return make_splits(syn400, 0, 0, test_size=100, val_size=50)


def rand_csr(rng, n, m, density=0.3):
    from seal.numerics import CsrMatrix
    a = rng.random((n, m)) * (rng.random((n, m)) < density)
    return CsrMatrix.from_dense(a), a


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list = []


@pytest.fixture(scope="session")
def acceptance_line():
    """Record one PASS/FAIL line per acceptance criterion; printed at the end of the run."""
    def record(number, ok, text):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {text}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
