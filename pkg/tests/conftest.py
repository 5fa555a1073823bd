"""Shared fixtures for the test suite.

The expensive objects (catalog candidates, horizon sweeps, the shooting
solve, the transcription pair) are built once per session and shared.
``record_acceptance`` collects one line per acceptance test; the terminal
summary hook prints the collected lines at the end of every run so the
battery's verdicts are visible even when all tests pass.
"""

import numpy as np
import pytest

from costatekit.costate import limiting_costate
from costatekit.oracle import transcribe
from costatekit.problems import (
    HorizonSequence,
    candidate_process,
    instantiate_problem,
)
from costatekit.shoot import shoot_scalar

CATALOG_IDS = ("LQ1", "LQ1F", "LQ0", "ABN1", "CONST1")

_acceptance_lines = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    _acceptance_lines.append(f"[{number:02d}] {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance summary")
    for line in sorted(_acceptance_lines):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def problems():
    return {pid: instantiate_problem(pid) for pid in CATALOG_IDS}


@pytest.fixture(scope="session")
def candidates(problems):
    # span 80 covers the default horizon sweep (last = 64), the check
    # window (40), and the sequence-report tails.
    return {pid: candidate_process(problems[pid], horizon=80.0) for pid in CATALOG_IDS}


@pytest.fixture(scope="session")
def horizons():
    return HorizonSequence.geometric(2.0, 2.0, 6)


@pytest.fixture(scope="session")
def limits(problems, candidates, horizons):
    return {
        pid: limiting_costate(problems[pid], candidates[pid], horizons)
        for pid in CATALOG_IDS
    }


@pytest.fixture(scope="session")
def lq1_shoot(problems):
    return shoot_scalar(problems["LQ1"], np.array([1.0]), (-3.0, 0.0), horizon=40.0)


@pytest.fixture(scope="session")
def lq1_oracle(problems):
    coarse = transcribe(problems["LQ1"], np.array([1.0]), 8.0, 800)
    fine = transcribe(problems["LQ1"], np.array([1.0]), 8.0, 1600)
    return coarse, fine
