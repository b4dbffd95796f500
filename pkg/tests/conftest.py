import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from derainnet import numerics  # noqa: E402


@pytest.fixture(params=numerics.available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    previous = numerics.current_backend()
    numerics.set_backend(request.param)
    yield request.param
    numerics.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (len(k.split()[0]), k)):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
