import time
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oscgroup import fixtures
from oscgroup.pipelines import run_segmentation_feedback

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def feedback_sigma40():
    """Shared sigma=40 feedback run: ``(img, truth, result, warnings, seconds)``."""
    img, truth = fixtures.three_level(0, sigma=40.0)
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = run_segmentation_feedback(img, beta_t=40.0, k=3, seed=0)
    return img, truth, res, caught, time.perf_counter() - start
