"""Shared fixtures and the acceptance-criteria summary hook."""

from __future__ import annotations

import pytest

from torchsight.patterns import compile_patterns
from torchsight.taxonomy import load_registry

from stub_backend import StubServer

# nodeid -> human label for tests marked @pytest.mark.acceptance("...")
_ACCEPTANCE_LABELS: dict[str, str] = {}


@pytest.fixture(scope="session")
def registry():
    return load_registry()


@pytest.fixture(scope="session")
def engine(registry):
    return compile_patterns(None, registry)


@pytest.fixture(scope="session")
def stub_server():
    with StubServer() as server:
        yield server


def pytest_collection_modifyitems(config, items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker and marker.args:
            _ACCEPTANCE_LABELS[item.nodeid] = str(marker.args[0])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LABELS:
        return
    verdicts: dict[str, str] = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            label = _ACCEPTANCE_LABELS.get(getattr(report, "nodeid", None))
            if label:
                verdicts[label] = verdict
    if not verdicts:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for label in _ACCEPTANCE_LABELS.values():
        if label in verdicts:
            terminalreporter.write_line(f"[ACCEPTANCE] {label}: {verdicts[label]}")
