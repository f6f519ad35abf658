import functools
from pathlib import Path

import pytest

from agdrive.config import parse_scenario, parse_vehicle
from agdrive.simulator import run_world, compute_metrics

GOLDEN = Path(__file__).parent / 'golden'


@functools.lru_cache(maxsize=None)
def shipped_run(vehicle: str, scenario: str):
    """(world, trace, metrics) for a shipped vehicle/scenario pair, computed once per session."""
    v = parse_vehicle(vehicle)
    sc = parse_scenario(scenario)
    world, trace = run_world(v, sc)
    return world, trace, compute_metrics(trace, sc)


@pytest.fixture
def golden_dir():
    return GOLDEN


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section('acceptance criteria')
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
