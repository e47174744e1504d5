import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20170721)


def pytest_configure(config):
    config._criterion_lines = []


@pytest.fixture
def record_criterion(request):
    """Log a PASS/FAIL line for an acceptance criterion; lines are echoed in the summary."""
    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}"
        request.config._criterion_lines.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
