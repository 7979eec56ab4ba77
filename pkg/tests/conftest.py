from __future__ import annotations

import functools
import math

import pytest

from sftcarpet.compensation import build_G
from sftcarpet.errors import NoApplicableTheorem
from sftcarpet.fixtures import NAMES, load_fixture

BETA = (math.log2(3) - 1) / math.log2(3)
GOLDEN = (1 + math.sqrt(5)) / 2
CERTIFIED = ("ex5_1", "ex5_2", "ex7_1", "ex7_4", "ex7_5", "ex7_6")
UNCERTIFIED = tuple(n for n in NAMES if n not in CERTIFIED)


@functools.lru_cache(maxsize=None)
def spec(name):
    return load_fixture(name)


def pi_of(name):
    return spec(name).pi


@functools.lru_cache(maxsize=None)
def G_of(name):
    try:
        return build_G(pi_of(name))
    except NoApplicableTheorem:
        return None


# -- acceptance summary ------------------------------------------------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num, title = mark.args
    if rep.when == "setup" and rep.passed:
        return
    ok = rep.passed and not hasattr(rep, "wasxfail")
    prev = _CRITERIA.get(num, (title, True))
    _CRITERIA[num] = (title, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, ok = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {title}")
