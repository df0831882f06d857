import pytest
from hypothesis import given, settings, strategies as st

from conftest import P, make_system
from pagecache_lab import (
    PageId, Regime, build_lab, evict_page_linux, evict_page_windows, mincore, query_working_set,
    survey_cache,
)
from pagecache_lab.errors import EvictionSetError, PermissionDenied
from pagecache_lab.eviction import register_targets


def _lab(seed=0, **kw):
    return build_lab(Regime.LINUX, seed=seed, **kw)


def _cached_target(lab):
    lab.system.access_page(lab.victim, lab.target)
    assert lab.system.is_resident(lab.target)


def test_survey_empty_cache():
    s = make_system(files=(("f", 40), ("g", 24)), procs=("a",))
    b = survey_cache(s, "a", ["f", "g"])
    assert b.set1 == []
    assert sorted(b.set2) == sorted([P(i) for i in range(40)] + [PageId("g", i) for i in range(24)])


def test_survey_splits_by_residency():
    s = make_system(files=(("f", 40),), procs=("a", "b"))
    for i in (3, 7, 30):
        s.access_page("b", P(i))
    b = survey_cache(s, "a", ["f"])
    assert set(b.set1) == {P(3), P(7), P(30)}
    assert len(b.set2) == 37


def test_survey_is_deterministic():
    a = _lab(seed=5).bundle
    b = _lab(seed=5).bundle
    assert a == b


def test_survey_needs_readable_files():
    s = make_system(procs=("a",))
    s.add_process("root", user="root")
    s.add_file("secret", 8, attacker_readable=False, owner="root")
    with pytest.raises(EvictionSetError):
        survey_cache(s, "a", ["secret"])


def test_survey_guard_excludes_target_window():
    lab = _lab()
    b = lab.bundle
    assert lab.target in b.targets
    assert b.guard == {PageId(lab.target.file, i) for i in range(32)} - {lab.target}
    assert not b.guard & (set(b.set1) | set(b.set2))


def test_set3_occupies_capacity():
    lab = _lab(set3_fraction=0.25)
    assert len(lab.bundle.set3) == 512
    assert len(lab.system.state.unevictable) >= 512


def test_evict_cached_target():
    lab = _lab()
    _cached_target(lab)
    lab.system.access_page(lab.victim, lab.target)  # activate it as well
    rep = evict_page_linux(lab.system, lab.attacker, lab.target, lab.bundle)
    assert rep.succeeded
    assert mincore(lab.system, lab.attacker, lab.target.file)[lab.target.index] is False
    assert rep.set1_survival >= 0.95
    assert rep.guard_survival == 1.0


def test_eviction_charges_flat_cost():
    lab = _lab()
    _cached_target(lab)
    rep = evict_page_linux(lab.system, lab.attacker, lab.target, lab.bundle)
    assert rep.elapsed_ns == lab.system.costs.linux_evict_ns


def test_guard_pages_survive():
    lab = _lab()
    s = lab.system
    for pg in lab.bundle.guard:
        s.access_page(lab.victim, pg)
    _cached_target(lab)
    rep = evict_page_linux(s, lab.attacker, lab.target, lab.bundle)
    assert rep.succeeded
    assert all(s.is_resident(pg) for pg in lab.bundle.guard)


def test_uncached_target_returns_immediately():
    lab = _lab()
    assert not lab.system.is_resident(lab.target)
    clock = lab.system.clock
    cursor = lab.bundle.cursor
    rep = evict_page_linux(lab.system, lab.attacker, lab.target, lab.bundle)
    assert rep.succeeded and rep.rounds == 0 and rep.pages_touched == 0
    assert lab.bundle.cursor == cursor and lab.system.clock == clock


def test_unregistered_target_rejected():
    lab = _lab()
    with pytest.raises(EvictionSetError):
        evict_page_linux(lab.system, lab.attacker, PageId("libgksu2.so", 40), lab.bundle)


def test_register_targets_moves_window_into_guard():
    lab = _lab()
    extra = PageId("shared0", 100)
    b = register_targets(lab.system, lab.bundle, [extra])
    assert extra in b.targets and lab.target in b.targets
    win = {PageId("shared0", i) for i in range(96, 128)}
    assert win - {extra} <= b.guard
    assert not win & (set(b.set1) | set(b.set2))
    b.check()


def test_under_provisioned_set2_fails_cleanly():
    lab = _lab(filler_files=1, filler_pages=64, shared_files=1)
    _cached_target(lab)
    rep = evict_page_linux(lab.system, lab.attacker, lab.target, lab.bundle)
    assert not rep.succeeded
    assert lab.system.is_resident(lab.target)


def test_linux_eviction_refuses_windows_regime():
    s = make_system(Regime.WINDOWS)
    lab = _lab()
    with pytest.raises(EvictionSetError):
        evict_page_linux(s, "a", lab.target, lab.bundle)


def test_stop_early_by_replay():
    lab = _lab(seed=3)
    _cached_target(lab)
    lab.system.access_page(lab.victim, lab.target)
    rep = evict_page_linux(lab.system, lab.attacker, lab.target, lab.bundle)
    assert rep.succeeded and rep.rounds >= 1
    again = _lab(seed=3)
    _cached_target(again)
    again.system.access_page(again.victim, again.target)
    short = evict_page_linux(again.system, again.attacker, again.target, again.bundle,
                             max_rounds=rep.rounds - 1)
    assert not short.succeeded
    assert again.system.is_resident(again.target)


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.integers(0, 3))
def test_eviction_invariants(seed, extra_hits):
    lab = _lab(seed=seed, warmup_touches=1500)
    s = lab.system
    _cached_target(lab)
    for _ in range(extra_hits):
        s.access_page(lab.victim, lab.target)
    rep = evict_page_linux(s, lab.attacker, lab.target, lab.bundle)
    assert rep.succeeded
    assert not s.is_resident(lab.target)
    assert rep.set1_survival >= 0.95
    assert rep.guard_survival == 1.0
    assert not set(s.state.ghost) & set(s.state.entries)
    s.check_invariants()


def test_windows_virtual_unlock_path():
    s = make_system(Regime.WINDOWS, procs=("att", "victim"))
    s.access_page("att", P(4))
    s.access_page("victim", P(4))
    rep = evict_page_windows(s, "att", "att", P(4))
    assert rep.succeeded and rep.elapsed_ns == s.costs.windows_evict_ns
    assert P(4) not in s.process("att").working_set
    assert s.is_resident(P(4))
    s.lock_page("att", P(4))
    assert query_working_set(s, "att", "att", [P(4)])[0].share_count == 2


def test_windows_shrink_path():
    s = make_system(Regime.WINDOWS, capacity=256, procs=("att", "victim"))
    for i in range(60):
        s.access_page("victim", P(i))
    rep = evict_page_windows(s, "att", "victim", P(2))
    assert rep.succeeded
    v = s.process("victim")
    assert P(2) not in v.working_set
    assert v.ws_max_pages == 13
    assert s.is_resident(P(2))


def test_windows_shrink_needs_quota():
    s = make_system(Regime.WINDOWS, procs=("att",))
    s.add_process("victim", user="alice")
    s.map_file("victim", "f")
    s.access_page("victim", P(0))
    with pytest.raises(PermissionDenied):
        evict_page_windows(s, "att", "victim", P(0))


def test_windows_target_not_in_working_set(windows):
    clock = windows.clock
    rep = evict_page_windows(windows, "a", "b", P(9))
    assert rep.succeeded and rep.rounds == 0 and windows.clock == clock
