import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest


@pytest.fixture(scope="session")
def default_matches():
    from crossrelax.resonance import resonance_table
    return resonance_table()


@pytest.fixture(scope="session")
def default_clusters(default_matches):
    import copy

    from crossrelax.resonance import cluster_peaks
    return cluster_peaks(copy.deepcopy(default_matches))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(set(mod.RESULTS), key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
