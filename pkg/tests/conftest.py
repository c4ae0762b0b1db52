"""Per-criterion PASS/FAIL summary for tests tagged ``@pytest.mark.criterion(n)``."""

import os
from collections import defaultdict

import pytest
from hypothesis import settings

# Fixed example generation keeps runs reproducible; HYPOTHESIS_PROFILE=random explores.
settings.register_profile("repro", derandomize=True)
settings.register_profile("random", derandomize=False)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))

_criteria: dict[str, list[int]] = {}
_outcomes: dict[int, list[tuple[str, bool]]] = defaultdict(list)


def pytest_collection_modifyitems(items):
    for item in items:
        nums = [m.args[0] for m in item.iter_markers("criterion")]
        if nums:
            _criteria[item.nodeid] = nums


def pytest_runtest_logreport(report):
    nums = _criteria.get(report.nodeid)
    if not nums:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        for n in nums:
            _outcomes[n].append((report.nodeid, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        results = _outcomes[n]
        failed = [nodeid for nodeid, ok in results if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {n}: {status} ({len(results) - len(failed)}/{len(results)} checks)"
        terminalreporter.write_line(line)
        for nodeid in failed:
            terminalreporter.write_line(f"    failed: {nodeid}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20131)
