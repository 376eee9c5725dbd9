"""Shared fixtures: expensive simulated traces built once per session."""

import pytest

from eids import sim

BENIGN_SEED = 20260809
LONG_SEED = 42


@pytest.fixture(scope="session")
def benign_trace_30m():
    """30 minutes of benign plant traffic; learning uses the first 10."""
    return sim.run(duration_us=1_800_000_000, seed=BENIGN_SEED)


@pytest.fixture(scope="session")
def trace_2h():
    """Two hours of benign traffic for the slow ARP statistics."""
    return sim.run(duration_us=7_200_000_000, seed=LONG_SEED)
