"""Shared fixtures: bundled count tables, the reference station geometry,
and an in-process CLI runner."""

import json
from pathlib import Path

import pytest

from dirne.cli import main as cli_main
from dirne.sim import SpacetimeGeometry, TrialTally

DATA_DIR = Path(__file__).parent / "data"

TRAINING_TALLY = DATA_DIR / "training_tally.txt"
EXPERIMENTAL_TALLY = DATA_DIR / "experimental_tally.txt"


@pytest.fixture(scope="session")
def training_tally() -> TrialTally:
    """Count table of the training data set (test rounds only)."""
    return TrialTally.from_text(TRAINING_TALLY)


@pytest.fixture(scope="session")
def experimental_tally() -> TrialTally:
    """Count table of the experimental run (test and generation rounds)."""
    return TrialTally.from_text(EXPERIMENTAL_TALLY)


@pytest.fixture(scope="session")
def reference_geometry() -> SpacetimeGeometry:
    """Distances and delays of the reference two-station experiment."""
    return SpacetimeGeometry(
        dist_sa_m=93.0,
        dist_sb_m=90.0,
        path_sa_m=191.0,
        path_sb_m=173.5,
        t_e_ns=10.0,
        qrng_a_ns=96.0,
        qrng_b_ns=96.0,
        delay_a_ns=270.0,
        delay_b_ns=230.0,
        pc_a_ns=112.0,
        pc_b_ns=100.0,
        m_a_ns=55.0,
        m_b_ns=100.0,
    )


@pytest.fixture
def run_cli(capsys):
    """Invoke the command-line entry point in-process.

    Returns ``(exit_code, output, stderr_text)`` where ``output`` is the
    parsed JSON report when stdout holds one, the raw stdout text when it
    holds something else (the curve subcommand prints CSV), and None when
    stdout is empty.
    """

    def invoke(argv):
        code = cli_main(argv)
        captured = capsys.readouterr()
        if not captured.out.strip():
            output = None
        else:
            try:
                output = json.loads(captured.out)
            except json.JSONDecodeError:
                output = captured.out
        return code, output, captured.err

    return invoke
