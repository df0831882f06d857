"""Attacker-visible query and hint calls.

``mincore`` and ``query_working_set`` never touch cache or working-set state;
they only charge their cost to the clock (also when a permission check fails,
since the system call is paid for either way).
"""

from __future__ import annotations

from dataclasses import dataclass

from .cache import Integrity, PageId
from .errors import MappingError, PermissionDenied


@dataclass(frozen=True)
class ProbePolicy:
    """Countermeasure switches.  All off reproduces the unpatched systems."""

    mincore_privileged: bool = False
    qws_requires_full_info: bool = False
    share_count_omitted: bool = False


@dataclass(frozen=True)
class ResidencyVector:
    base: PageId
    bits: tuple

    def __len__(self):
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    def count(self):
        return sum(self.bits)

    def resident_pages(self):
        return [PageId(self.base.file, self.base.index + i) for i, b in enumerate(self.bits) if b]


@dataclass(frozen=True)
class WorkingSetRecord:
    page: PageId
    in_working_set: bool
    share_count: int | None
    locked: bool


def mincore(system, proc, file, first=0, count=None):
    """Residency of pages [first, first+count) of ``file`` as seen by ``proc``."""
    system.charge(system.costs.mincore_ns)
    p = system.process(proc)
    f = system.file(file)
    if system.policy.mincore_privileged and p.integrity < Integrity.ADMIN:
        raise PermissionDenied(f"mincore requires privilege; {proc!r} is {p.integrity.name}",
                               "mincore_privileged")
    if file not in p.mappings:
        raise MappingError(f"{proc!r} has not mapped {file!r}")
    if count is None:
        count = f.num_pages - first
    if first < 0 or count < 0 or first + count > f.num_pages:
        raise MappingError(f"range [{first}, {first + count}) outside {file!r}")
    resident = system.state.resident
    bits = tuple(resident(PageId(file, i)) for i in range(first, first + count))
    return ResidencyVector(PageId(file, first), bits)


def mincore_pages(system, proc, pages):
    """Residency for an arbitrary page list, charged one call per distinct
    file (one mapping, one call over its span)."""
    files = []
    for pg in pages:
        if pg.file not in files:
            files.append(pg.file)
    p = system.process(proc)
    for fid in files:
        system.charge(system.costs.mincore_ns)
        if system.policy.mincore_privileged and p.integrity < Integrity.ADMIN:
            raise PermissionDenied("mincore requires privilege", "mincore_privileged")
        if fid not in p.mappings:
            raise MappingError(f"{proc!r} has not mapped {fid!r}")
    resident = system.state.resident
    return [resident(pg) for pg in pages]


def query_working_set(system, caller, target, pages):
    """QueryWorkingSetEx on ``target`` for ``pages`` (keyed by PageId, which
    stands in for the shared virtual address)."""
    system.charge(system.costs.qws_ns)
    system.process(caller)
    t = system.process(target)
    if caller != target:
        if not system.has_query_limited(caller, target):
            raise PermissionDenied(
                f"{caller!r} lacks PROCESS_QUERY_LIMITED_INFORMATION over {target!r}",
                "query_limited")
        if system.policy.qws_requires_full_info and not system.has_full_info(caller, target):
            raise PermissionDenied(
                f"{caller!r} lacks PROCESS_QUERY_INFORMATION over {target!r}",
                "qws_requires_full_info")
    omit = system.policy.share_count_omitted
    ws = t.working_set
    out = []
    for pg in pages:
        present = pg in ws
        sc = system.share_count(pg) if present and not omit else None
        out.append(WorkingSetRecord(pg, present, sc, bool(present and ws[pg])))
    return out


def posix_fadvise_dontneed(system, proc, file):
    """Whole-file POSIX_FADV_DONTNEED.  Honoured only when nobody has the
    file mapped; returns whether it was."""
    system.charge(system.costs.fadvise_ns)
    system.process(proc)
    f = system.file(file)
    if not system.can_read(proc, file):
        raise PermissionDenied(f"{proc!r} cannot open {file!r}", "file_read")
    if f.mapped_by:
        return False
    system.drop_file_pages(file)
    return True


def madvise_dontneed(system, proc, page):
    """MADV_DONTNEED on one page; honoured only for the sole mapper."""
    p = system.process(proc)
    f = system.file(page.file)
    if page.file not in p.mappings:
        raise MappingError(f"{proc!r} has not mapped {page.file!r}")
    if f.mapped_by != {proc}:
        return False
    system.remove_page(page)
    return True


def virtual_unlock(system, proc, page):
    """VirtualUnlock: an unlocked working-set page is removed from the
    working set (it stays cached); a locked one is only unlocked."""
    system.charge(system.costs.unlock_ns)
    return system.unlock_or_drop(proc, page)
