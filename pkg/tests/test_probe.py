import pytest
from hypothesis import given, strategies as st

from conftest import P, make_system
from pagecache_lab import (
    Integrity, PageId, ProbePolicy, Regime, madvise_dontneed, mincore, posix_fadvise_dontneed,
    query_working_set, virtual_unlock,
)
from pagecache_lab.errors import MappingError, PermissionDenied
from pagecache_lab.probe import mincore_pages


def test_mincore_on_empty_cache(linux):
    v = mincore(linux, "a", "f", 0, 16)
    assert len(v) == 16 and v.count() == 0


def test_mincore_sees_victim_page_14():
    s = make_system(files=(("lib", 20),))
    s.access_page("b", PageId("lib", 14))
    v = mincore(s, "a", "lib")
    assert [i for i, b in enumerate(v) if b] == [14]
    assert v.resident_pages() == [PageId("lib", 14)]


def test_mincore_is_non_destructive(linux):
    for i in (1, 5, 9):
        linux.access_page("b", P(i))
    before = linux.fingerprint()
    a = mincore(linux, "a", "f")
    b = mincore(linux, "a", "f")
    assert a == b
    assert linux.fingerprint() == before
    assert linux.clock == 2 * 2040


def test_mincore_needs_mapping():
    s = make_system()
    s.add_file("g", 4)
    with pytest.raises(MappingError):
        mincore(s, "a", "g")


def test_mincore_range_checked(linux):
    with pytest.raises(MappingError):
        mincore(linux, "a", "f", 120, 20)


def test_mincore_privileged_policy_charges_anyway():
    s = make_system(policy=ProbePolicy(mincore_privileged=True))
    with pytest.raises(PermissionDenied) as ei:
        mincore(s, "a", "f")
    assert ei.value.policy == "mincore_privileged"
    assert s.clock == 2040
    s.add_process("root", integrity=Integrity.ADMIN)
    s.map_file("root", "f")
    mincore(s, "root", "f")


def test_mincore_pages_charges_once_per_file():
    s = make_system(files=(("f", 64), ("g", 64)))
    s.access_page("b", PageId("g", 3))
    got = mincore_pages(s, "a", [P(1), P(2), PageId("g", 3)])
    assert got == [False, False, True]
    assert s.clock == 2 * 2040


def test_variant1_own_working_set_share_count():
    s = make_system(Regime.WINDOWS, procs=("me", "x", "y", "z"))
    for p in ("me", "x", "y", "z"):
        s.access_page(p, P(7))
    rec = query_working_set(s, "me", "me", [P(7)])[0]
    assert rec.in_working_set and rec.share_count == 4  # 3 others plus the caller
    assert s.clock == 466


def test_variant1_works_across_users():
    s = make_system(Regime.WINDOWS, procs=("me",))
    s.add_process("victim", user="alice")
    s.map_file("victim", "f")
    s.access_page("me", P(7))
    s.access_page("victim", P(7))
    assert query_working_set(s, "me", "me", [P(7)])[0].share_count == 2


def test_variant2_victim_working_set():
    s = make_system(Regime.WINDOWS, procs=("att", "victim"))
    assert not query_working_set(s, "att", "victim", [P(2)])[0].in_working_set
    s.access_page("victim", P(2))
    rec = query_working_set(s, "att", "victim", [P(2)])[0]
    assert rec.in_working_set and rec.share_count == 1


def test_cross_process_query_needs_same_user():
    s = make_system(Regime.WINDOWS, procs=("att",))
    s.add_process("victim", user="alice")
    with pytest.raises(PermissionDenied) as ei:
        query_working_set(s, "att", "victim", [P(0)])
    assert ei.value.policy == "query_limited"


def test_full_info_policy_blocks_cross_process_only():
    s = make_system(Regime.WINDOWS, procs=("att", "victim"),
                    policy=ProbePolicy(qws_requires_full_info=True))
    with pytest.raises(PermissionDenied) as ei:
        query_working_set(s, "att", "victim", [P(0)])
    assert ei.value.policy == "qws_requires_full_info"
    query_working_set(s, "att", "att", [P(0)])


def test_share_count_omitted_policy():
    s = make_system(Regime.WINDOWS, policy=ProbePolicy(share_count_omitted=True))
    s.access_page("a", P(0))
    rec = query_working_set(s, "a", "a", [P(0)])[0]
    assert rec.in_working_set and rec.share_count is None


def test_fadvise_unmapped_file():
    s = make_system(files=(("c", 25),), procs=("a",))
    s.unmap_file("a", "c")
    s.read_file("a", "c")
    assert s.resident_count("c") == 25
    assert posix_fadvise_dontneed(s, "a", "c") is True
    assert s.resident_count("c") == 0
    assert posix_fadvise_dontneed(s, "a", "c") is True  # nothing cached: still accepted


def test_fadvise_ignored_when_mapped(linux):
    linux.access_page("b", P(0))
    before = linux.fingerprint()
    assert posix_fadvise_dontneed(linux, "a", "f") is False
    assert linux.fingerprint() == before


def test_madvise_sole_mapper_only():
    s = make_system(procs=("a",))
    s.access_page("a", P(0))
    assert madvise_dontneed(s, "a", P(0)) is True
    assert not s.is_resident(P(0))
    assert madvise_dontneed(s, "a", P(0)) is True
    s.add_process("b")
    s.map_file("b", "f")
    s.access_page("a", P(1))
    assert madvise_dontneed(s, "a", P(1)) is False
    assert s.is_resident(P(1))


def test_madvise_needs_mapping():
    s = make_system(procs=("a",))
    s.add_process("b")
    with pytest.raises(MappingError):
        madvise_dontneed(s, "b", P(0))


def test_virtual_unlock_semantics(windows):
    windows.access_page("a", P(0))
    assert virtual_unlock(windows, "a", P(0)) == "dropped"
    assert P(0) not in windows.process("a").working_set
    assert windows.is_resident(P(0))
    windows.lock_page("a", P(1))
    assert virtual_unlock(windows, "a", P(1)) == "unlocked"
    assert windows.process("a").working_set[P(1)] is False
    assert virtual_unlock(windows, "a", P(2)) is None


policies = st.builds(ProbePolicy, st.booleans(), st.booleans(), st.booleans())


def _probe_outcomes(policy):
    s = make_system(Regime.WINDOWS, procs=("low", "user", "admin"), policy=policy)
    s.process("low").integrity = Integrity.LOW
    s.process("admin").integrity = Integrity.ADMIN
    s.access_page("user", P(3))
    ok = set()
    for caller in ("low", "user", "admin"):
        try:
            mincore(s, caller, "f", 0, 4)
            ok.add(("mincore", caller))
        except PermissionDenied:
            pass
        for target in ("low", "user", "admin"):
            try:
                rec = query_working_set(s, caller, target, [P(3)])[0]
                ok.add(("qws", caller, target))
                if rec.share_count is not None:
                    ok.add(("sc", caller, target))
            except PermissionDenied:
                pass
    return ok


@given(policies, policies)
def test_restrictions_are_monotone(p, q):
    stricter = ProbePolicy(p.mincore_privileged or q.mincore_privileged,
                           p.qws_requires_full_info or q.qws_requires_full_info,
                           p.share_count_omitted or q.share_count_omitted)
    assert _probe_outcomes(stricter) <= _probe_outcomes(p)


@given(st.lists(st.tuples(st.sampled_from("ab"), st.integers(0, 63)), max_size=40))
def test_probes_never_change_state(script):
    s = make_system(Regime.WINDOWS, capacity=128, files=(("f", 64),))
    for proc, i in script:
        s.access_page(proc, P(i))
    before = s.fingerprint()
    mincore(s, "a", "f")
    query_working_set(s, "a", "b", [P(i) for i in range(64)])
    assert s.fingerprint() == before
