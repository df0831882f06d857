import os

import pytest
from hypothesis import HealthCheck, settings

from pagecache_lab import PageId, ReadaheadConfig, Regime, System

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_system(regime=Regime.LINUX, capacity=64, *, readahead=False, files=(("f", 128),),
                procs=("a", "b"), **kw):
    """Small system with readahead off unless asked for, every file mapped by
    every process."""
    s = System(regime, capacity, readahead=ReadaheadConfig(enabled=readahead), **kw)
    for p in procs:
        s.add_process(p)
    for fid, n in files:
        s.add_file(fid, n)
        for p in procs:
            s.map_file(p, fid)
    return s


@pytest.fixture
def linux():
    return make_system()


@pytest.fixture
def windows():
    return make_system(Regime.WINDOWS, capacity=256)


def P(i, f="f"):
    return PageId(f, i)


# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
