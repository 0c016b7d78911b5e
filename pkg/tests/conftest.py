import os
import re

import pytest

from flowgan.synthetic import cidds_like_flows

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_results: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture(scope="session")
def corpus():
    """A labelled synthetic week, shared read-only by many tests."""
    return cidds_like_flows(6000, seed=11, attacks=True)


@pytest.fixture(scope="session")
def small_corpus(corpus):
    return corpus[:1500]


def real_paths(var: str) -> list[str] | None:
    value = os.environ.get(var)
    if not value:
        return None
    return [p for p in value.split(os.pathsep) if p]


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m or "test_acceptance" not in report.nodeid:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = ""
        if report.failed and report.longrepr is not None:
            lines = [l[1:].strip() for l in str(report.longrepr).splitlines() if l.startswith("E ")]
            detail = " ".join(l for l in lines[:4] if l)
        _results.setdefault(n, []).append((report.nodeid.split("::")[-1], report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        runs = _results[n]
        failed = [r for r in runs if not r[1]]
        line = f"criterion {n}: {'FAIL' if failed else 'PASS'}  ({len(runs) - len(failed)}/{len(runs)} checks)"
        if failed:
            name, _, detail = failed[0]
            line += f"  {name}: {detail[:160]}"
        terminalreporter.write_line(line)
