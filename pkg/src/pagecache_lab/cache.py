"""Deterministic page-cache simulation.

Two regimes share one global cache:

* ``linux_global``: any process's accesses compete for the same two-list
  (inactive/active) second-chance cache with a ghost list of recently
  evicted pages.
* ``windows_working_set``: every process additionally owns a bounded working
  set.  Pages in some working set are pinned in the global cache; dropping a
  page from a working set never evicts it globally.

All mutation goes through :class:`System`, which also owns the logical clock
(integer nanoseconds).  Operations charge configured costs to the clock;
nothing here reads wall-clock time.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import NamedTuple

from .errors import (
    CacheFullError,
    IdentityError,
    InvariantViolation,
    MappingError,
    PermissionDenied,
    WorkingSetError,
)
from .readahead import ReadaheadConfig, window_bounds

PAGE_SIZE = 4096
SHARE_COUNT_CAP = 7
WS_FLOOR_PAGES = 13
WS_DEFAULT_MAX_PAGES = 345  # 1.4 MB
WS_DEFAULT_MIN_PAGES = 25  # 100 KB
DEFAULT_CAPACITY_PAGES = 65536

INACTIVE = "inactive"
ACTIVE = "active"


class Regime(str, Enum):
    LINUX = "linux_global"
    WINDOWS = "windows_working_set"


class Integrity(IntEnum):
    LOW = 0
    SAME_USER = 1
    ADMIN = 2


class PageId(NamedTuple):
    file: str
    index: int


_new_page = tuple.__new__  # PageId construction without the namedtuple wrapper


def _page(file, index):
    return _new_page(PageId, (file, index))


@dataclass
class FileObject:
    id: str
    num_pages: int
    label: str = ""
    attacker_readable: bool = True
    owner: str | None = None
    mapped_by: set = field(default_factory=set)

    def __post_init__(self):
        if self.num_pages < 1:
            raise ValueError(f"file {self.id!r}: num_pages must be >= 1")
        if not self.label:
            self.label = self.id

    @property
    def size_bytes(self):
        return self.num_pages * PAGE_SIZE


class CacheEntry:
    # hand-written rather than a dataclass: this is built once per page fill
    __slots__ = ("page", "list", "referenced", "last_access")

    def __init__(self, page, list, referenced, last_access):
        self.page = page
        self.list = list
        self.referenced = referenced
        self.last_access = last_access

    def __repr__(self):
        return (f"CacheEntry(page={self.page!r}, list={self.list!r}, "
                f"referenced={self.referenced}, last_access={self.last_access})")

    def __eq__(self, other):
        if not isinstance(other, CacheEntry):
            return NotImplemented
        return (self.page, self.list, self.referenced, self.last_access) == (
            other.page, other.list, other.referenced, other.last_access)


@dataclass
class Process:
    id: str
    integrity: Integrity = Integrity.SAME_USER
    user: str = "user"
    working_set: OrderedDict = field(default_factory=OrderedDict)  # PageId -> locked
    ws_min_pages: int = WS_DEFAULT_MIN_PAGES
    ws_max_pages: int = WS_DEFAULT_MAX_PAGES
    mappings: set = field(default_factory=set)
    capabilities: frozenset = frozenset({"ipc", "net"})

    def locked_pages(self):
        return [p for p, locked in self.working_set.items() if locked]


@dataclass(frozen=True)
class CostModel:
    mincore_ns: int = 2040
    qws_ns: int = 466
    linux_evict_ns: int = 149_000_000
    windows_evict_ns: int = 4_480_000
    access_ns: int = 0
    unlock_ns: int = 100
    fadvise_ns: int = 0

    def __post_init__(self):
        for name in ("mincore_ns", "qws_ns", "linux_evict_ns", "windows_evict_ns"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("access_ns", "unlock_ns", "fadvise_ns"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


class PageCacheState:
    """Global cache lists.  Knows nothing about processes; the owning
    :class:`System` installs ``is_pinned`` for the working-set regime."""

    def __init__(self, regime, capacity_pages, ghost_capacity=None):
        if capacity_pages < 1:
            raise ValueError("capacity_pages must be >= 1")
        self.regime = Regime(regime)
        self.capacity_pages = capacity_pages
        self.ghost_capacity = capacity_pages if ghost_capacity is None else ghost_capacity
        self.inactive: OrderedDict[PageId, CacheEntry] = OrderedDict()
        self.active: OrderedDict[PageId, CacheEntry] = OrderedDict()
        self.unevictable: dict[PageId, None] = {}
        self.ghost: OrderedDict[PageId, None] = OrderedDict()
        self.clock = 0
        self.is_pinned = None

    def __len__(self):
        return len(self.inactive) + len(self.active) + len(self.unevictable)

    @property
    def entries(self):
        merged = dict(self.inactive)
        merged.update(self.active)
        return merged

    @property
    def ghost_list(self):
        return list(self.ghost)

    def lookup(self, page):
        e = self.inactive.get(page)
        if e is None:
            e = self.active.get(page)
        return e

    def resident(self, page):
        return page in self.inactive or page in self.active or page in self.unevictable

    def hit(self, e, tick):
        e.last_access = tick
        if e.list == INACTIVE:
            del self.inactive[e.page]
            e.list = ACTIVE
            e.referenced = False
            self.active[e.page] = e
        else:
            e.referenced = True
            self.active.move_to_end(e.page)

    def mark_accessed(self, e, tick):
        """Buffered-read reference: first touch only sets the referenced bit,
        a second touch while referenced activates."""
        if not e.referenced:
            e.referenced = True
            e.last_access = tick
        else:
            self.hit(e, tick)

    def make_room(self, n=1):
        cap = self.capacity_pages
        inactive, active, unev = self.inactive, self.active, self.unevictable
        while len(inactive) + len(active) + len(unev) + n > cap:
            if self.evict_lru_candidate() is None:
                raise CacheFullError("no evictable page left in the cache")

    def insert(self, page, tick, *, active=False):
        if len(self.inactive) + len(self.active) + len(self.unevictable) >= self.capacity_pages:
            self.make_room()
        self.ghost.pop(page, None)
        if active:
            e = self.active[page] = CacheEntry(page, ACTIVE, False, tick)
        else:
            e = self.inactive[page] = CacheEntry(page, INACTIVE, False, tick)
        return e

    def insert_unevictable(self, page):
        self.make_room()
        self.ghost.pop(page, None)
        self.unevictable[page] = None

    def remove(self, page):
        """Drop a page without recording it on the ghost list (invalidation,
        not replacement)."""
        if self.inactive.pop(page, None) is not None:
            return True
        if self.active.pop(page, None) is not None:
            return True
        if page in self.unevictable:
            del self.unevictable[page]
            return True
        return False

    def _demote_one(self):
        page, e = self.active.popitem(last=False)
        e.list = INACTIVE
        self.inactive[page] = e

    def _ghost_push(self, page):
        ghost = self.ghost
        ghost[page] = None
        if len(ghost) > self.ghost_capacity:
            ghost.popitem(last=False)

    def evict_lru_candidate(self):
        """Remove and return the replacement victim, or None if nothing can go.

        One active-head page is demoted per call while the inactive list is
        shorter than the active list (and always when inactive is empty).  The
        inactive head is then scanned: referenced pages get a second chance,
        pinned pages are skipped, the first plain page is evicted.
        """
        inactive, active = self.inactive, self.active
        if not inactive and not active:
            return None
        if active and len(inactive) < len(active):
            self._demote_one()
        pinned = self.is_pinned
        steps = 0
        while True:
            if not inactive or steps > 2 * len(inactive):
                if not active:
                    return None
                self._demote_one()
                steps = 0
                continue
            page, e = inactive.popitem(last=False)
            steps += 1
            if pinned is not None and pinned(page):
                inactive[page] = e
                continue
            if e.referenced:
                e.referenced = False
                inactive[page] = e
                continue
            self._ghost_push(page)
            return page


class System:
    """The simulation context: files, processes, the global cache, working
    sets, the logical clock and an agenda of scripted actions."""

    def __init__(
        self,
        regime=Regime.LINUX,
        capacity_pages=DEFAULT_CAPACITY_PAGES,
        *,
        costs=None,
        readahead=None,
        policy=None,
        seed=0,
        ghost_capacity=None,
    ):
        from .probe import ProbePolicy

        self.regime = Regime(regime)
        self.state = PageCacheState(self.regime, capacity_pages, ghost_capacity)
        self.costs = costs or CostModel()
        self.readahead = readahead or ReadaheadConfig()
        self.policy = policy or ProbePolicy()
        self.seed = seed
        self.files: dict[str, FileObject] = {}
        self.processes: dict[str, Process] = {}
        self._sharers: dict[PageId, int] = {}
        self._anon: dict[str, list[PageId]] = {}
        self._ids: dict[str, tuple] = {}
        self._tick = 0
        self._suspended = 0
        self._agenda = []
        self._agenda_seq = 0
        if self.regime is Regime.WINDOWS:
            self.state.is_pinned = self._sharers.__contains__

    # -- identity -----------------------------------------------------------

    def rng(self, name):
        """Independent deterministic stream per named consumer."""
        return random.Random(f"{self.seed}:{name}")

    def add_file(self, file_id, num_pages, *, label="", attacker_readable=True, owner=None):
        if file_id in self.files:
            raise IdentityError(f"file {file_id!r} already exists")
        f = FileObject(file_id, num_pages, label, attacker_readable, owner)
        self.files[file_id] = f
        return f

    def add_process(self, proc_id, *, integrity=Integrity.SAME_USER, user="user",
                    ws_min_pages=WS_DEFAULT_MIN_PAGES, ws_max_pages=WS_DEFAULT_MAX_PAGES):
        if proc_id in self.processes:
            raise IdentityError(f"process {proc_id!r} already exists")
        ws_max_pages = max(ws_max_pages, WS_FLOOR_PAGES)
        p = Process(proc_id, Integrity(integrity), user,
                    ws_min_pages=min(ws_min_pages, ws_max_pages), ws_max_pages=ws_max_pages)
        self.processes[proc_id] = p
        return p

    def process(self, proc_id):
        try:
            return self.processes[proc_id]
        except KeyError:
            raise IdentityError(f"unknown process {proc_id!r}") from None

    def file(self, file_id):
        try:
            return self.files[file_id]
        except KeyError:
            raise IdentityError(f"unknown file {file_id!r}") from None

    def _page_ids(self, file_id):
        # cached PageIds of a whole file, rebuilt if the file grew
        f = self.file(file_id)
        ids = self._ids.get(file_id)
        if ids is None or len(ids) != f.num_pages:
            ids = self._ids[file_id] = tuple(_page(file_id, i) for i in range(f.num_pages))
        return ids

    def page(self, file_id, index):
        f = self.file(file_id)
        if not 0 <= index < f.num_pages:
            raise IdentityError(f"page {index} out of range for {file_id!r} ({f.num_pages} pages)")
        return PageId(file_id, index)

    def pages(self, file_id, first=0, count=None):
        f = self.file(file_id)
        end = f.num_pages if count is None else first + count
        return [PageId(file_id, i) for i in range(first, end)]

    def can_read(self, proc_id, file_id):
        f = self.file(file_id)
        return f.attacker_readable or f.owner == proc_id

    def map_file(self, proc_id, file_id):
        p = self.process(proc_id)
        if not self.can_read(proc_id, file_id):
            raise MappingError(f"{proc_id!r} may not map {file_id!r}")
        p.mappings.add(file_id)
        self.files[file_id].mapped_by.add(proc_id)

    def unmap_file(self, proc_id, file_id):
        p = self.process(proc_id)
        f = self.file(file_id)
        p.mappings.discard(file_id)
        f.mapped_by.discard(proc_id)
        if self.regime is Regime.WINDOWS:
            for page in [pg for pg in p.working_set if pg.file == file_id]:
                self._ws_drop(p, page)

    @contextmanager
    def mapped(self, proc_id, file_id):
        """Map for the duration of a block (mmap ... munmap)."""
        already = file_id in self.process(proc_id).mappings
        if not already:
            self.map_file(proc_id, file_id)
        try:
            yield
        finally:
            if not already:
                self.unmap_file(proc_id, file_id)

    def has_quota(self, caller, target):
        """PROCESS_SET_QUOTA: same user, target integrity not higher."""
        c, t = self.process(caller), self.process(target)
        return c.user == t.user and t.integrity <= c.integrity

    def has_query_limited(self, caller, target):
        c, t = self.process(caller), self.process(target)
        return c.user == t.user and t.integrity <= c.integrity

    def has_full_info(self, caller, target):
        return self.has_query_limited(caller, target) and self.process(caller).integrity >= Integrity.ADMIN

    # -- clock ----------------------------------------------------------------

    @property
    def clock(self):
        return self.state.clock

    def charge(self, ns):
        if not self._suspended:
            self.state.clock += int(ns)

    def advance_clock(self, ns):
        if ns < 0:
            raise ValueError("cannot move the clock backwards")
        self.state.clock += int(ns)
        return self.state.clock

    @contextmanager
    def flat_cost(self, ns):
        """Run a composite operation whose internal steps are not charged
        individually; ``ns`` is charged once at the end."""
        self._suspended += 1
        try:
            yield
        finally:
            self._suspended -= 1
            self.charge(ns)

    @contextmanager
    def uncharged(self):
        self._suspended += 1
        try:
            yield
        finally:
            self._suspended -= 1

    # -- agenda ---------------------------------------------------------------

    def schedule(self, time_ns, action):
        """Queue ``action(system)`` to run at logical time ``time_ns``.
        Scripted actions belong to other processes and are never charged to
        the clock."""
        heapq.heappush(self._agenda, (int(time_ns), self._agenda_seq, action))
        self._agenda_seq += 1

    def next_scheduled(self):
        return self._agenda[0][0] if self._agenda else None

    def run_due(self, until_ns):
        ran = 0
        while self._agenda and self._agenda[0][0] <= until_ns:
            _, _, action = heapq.heappop(self._agenda)
            with self.uncharged():
                action(self)
            ran += 1
        return ran

    def clear_agenda(self):
        self._agenda.clear()

    # -- cache operations -------------------------------------------------

    def is_resident(self, page):
        return self.state.resident(page)

    def _next_tick(self):
        self._tick += 1
        return self._tick

    def fetch_window(self, file_id, index, *, demand=None, demand_active=False):
        """Bring the readahead window around ``index`` into the cache.

        Room for the whole batch is made before any of it is inserted, so a
        batch never evicts its own pages.  If the batch cannot fit at all, the
        readahead pages furthest from the end are dropped; the demand page
        (inserted last) always goes in.
        """
        ids = self._page_ids(file_id)
        start, end = window_bounds(self.readahead, index, len(ids))
        state = self.state
        inactive, active, unev, ghost = state.inactive, state.active, state.unevictable, state.ghost
        missing = [pg for pg in ids[start:end]
                   if pg not in inactive and pg not in active and pg not in unev]
        if demand is not None:
            if demand in inactive or demand in active or demand in unev:
                demand = None
            elif not missing or missing[-1] is not demand:
                if demand in missing:
                    missing.remove(demand)
                missing.append(demand)
        if not missing:
            return missing
        room = state.capacity_pages - len(unev)
        if len(missing) > room:
            if room <= 0:
                raise CacheFullError("cache is full of non-evictable pages")
            missing = missing[-room:]
        state.make_room(len(missing))
        tick = self._next_tick()
        if ghost:
            pop = ghost.pop
            for pg in missing:
                pop(pg, None)
                inactive[pg] = CacheEntry(pg, INACTIVE, False, tick)
        else:
            for pg in missing:
                inactive[pg] = CacheEntry(pg, INACTIVE, False, tick)
        if demand is not None and demand_active:
            e = inactive.pop(demand)
            e.list = ACTIVE
            active[demand] = e
        return missing

    def _reference(self, page, *, buffered=False):
        state = self.state
        e = state.lookup(page)
        if e is not None:
            tick = self._next_tick()
            if buffered:
                state.mark_accessed(e, tick)
            else:
                state.hit(e, tick)
            return 0
        if page in state.unevictable:
            return 0
        ghost_hit = page in state.ghost
        return len(self.fetch_window(page.file, page.index, demand=page, demand_active=ghost_hit))

    def access_page(self, proc_id, page):
        """Touch ``page`` through ``proc_id``'s mapping.  Returns the number
        of pages brought into the cache (0 on a hit)."""
        proc = self.process(proc_id)
        self.page(page.file, page.index)
        if page.file not in proc.mappings:
            raise MappingError(f"{proc_id!r} has not mapped {page.file!r}")
        inserted = self._reference(page)
        if self.regime is Regime.WINDOWS:
            self._ws_touch(proc, page)
        self.charge(self.costs.access_ns)
        return inserted

    def touch_resident(self, proc_id, pages):
        """Re-reference the already-cached pages among ``pages`` (a keep-alive
        sweep); uncached ones are skipped.  Linux regime only: no working-set
        bookkeeping.  Returns how many were touched."""
        proc = self.process(proc_id)
        for fid in {pg.file for pg in pages} - proc.mappings:
            raise MappingError(f"{proc_id!r} has not mapped {fid!r}")
        if self.regime is Regime.WINDOWS:
            raise WorkingSetError("touch_resident bypasses working sets")
        inactive, active = self.state.inactive, self.state.active
        tick = self._tick
        n = 0
        # same transitions as PageCacheState.hit, inlined for the hot loop
        for pg in pages:
            e = inactive.pop(pg, None)
            if e is not None:
                e.list = ACTIVE
                e.referenced = False
                active[pg] = e
            else:
                e = active.get(pg)
                if e is None:
                    continue
                e.referenced = True
                active.move_to_end(pg)
            tick += 1
            e.last_access = tick
            n += 1
        self._tick = tick
        self.charge(self.costs.access_ns * n)
        return n

    def read_file(self, proc_id, file_id, first=0, count=None):
        """Buffered read() of a page range.  Goes through the cache but never
        enters a working set.  Returns the number of pages brought in."""
        self.process(proc_id)
        ids = self._page_ids(file_id)
        if not self.can_read(proc_id, file_id):
            raise PermissionDenied(f"{proc_id!r} cannot read {file_id!r}", "file_read")
        end = len(ids) if count is None else min(len(ids), first + count)
        state = self.state
        inactive, active, unev, ghost = state.inactive, state.active, state.unevictable, state.ghost
        inserted = 0
        tick = self._tick
        ra, n = self.readahead, len(ids)
        i = first
        while i < end:
            ws, we = window_bounds(ra, i, n)
            stop = min(we, end)
            window = ids[ws:we]
            pg = ids[i]
            if (ws == i and we - ws <= state.capacity_pages - len(unev)
                    and inactive.keys().isdisjoint(window) and active.keys().isdisjoint(window)
                    and unev.keys().isdisjoint(window)):
                # Cold window read from its first page: the same end state as
                # fetch_window followed by a first touch of every later page
                # the read covers (the demand page's touch is the fetch)
                ghost_hit = pg in ghost
                state.make_room(len(window))
                if not ghost.keys().isdisjoint(window):
                    for q in window:
                        ghost.pop(q, None)
                fetched = tick = tick + 1
                for q in window[1:stop - ws]:
                    tick += 1
                    inactive[q] = CacheEntry(q, INACTIVE, True, tick)
                for q in window[stop - ws:]:
                    inactive[q] = CacheEntry(q, INACTIVE, False, fetched)
                e = inactive[pg] = CacheEntry(pg, INACTIVE, False, fetched)
                if ghost_hit:
                    del inactive[pg]
                    e.list = ACTIVE
                    active[pg] = e
                inserted += len(window)
                i = stop
                continue
            for j in range(i, stop):
                pg = ids[j]
                e = inactive.get(pg)
                if e is None:
                    e = active.get(pg)
                if e is not None:
                    # PageCacheState.mark_accessed and hit, inlined
                    tick += 1
                    e.last_access = tick
                    if not e.referenced:
                        e.referenced = True
                    elif e.list == INACTIVE:
                        del inactive[pg]
                        e.list = ACTIVE
                        e.referenced = False
                        active[pg] = e
                    else:
                        active.move_to_end(pg)
                elif pg not in unev:
                    self._tick = tick
                    inserted += len(self.fetch_window(file_id, j, demand=pg,
                                                      demand_active=pg in ghost))
                    tick = self._tick
            i = stop
        self._tick = tick
        self.charge(self.costs.access_ns * (end - first))
        return inserted

    def evict_lru_candidate(self):
        return self.state.evict_lru_candidate()

    def remove_page(self, page):
        return self.state.remove(page)

    def drop_file_pages(self, file_id):
        """Invalidate every cached page of a file that no working set holds
        (no ghost entries).  Returns the number dropped."""
        ids = self._page_ids(file_id)
        st, held = self.state, self._sharers
        before = len(st)
        for lst in (st.inactive, st.active, st.unevictable):
            for pg in list(filter(lst.__contains__, ids)):
                if pg not in held:
                    del lst[pg]
        return before - len(st)

    def purge_file(self, file_id):
        """Offline reset: take the file out of every working set, then out of
        the cache.  Not reachable by an unprivileged process."""
        ids = set(self._page_ids(file_id))
        for p in self.processes.values():
            for pg in [pg for pg in p.working_set if pg in ids]:
                self._ws_drop(p, pg)
        return self.drop_file_pages(file_id)

    def resident_count(self, file_id):
        ids = self._page_ids(file_id)
        st = self.state
        # a page sits in at most one of the three containers
        return (sum(map(st.inactive.__contains__, ids)) + sum(map(st.active.__contains__, ids))
                + sum(map(st.unevictable.__contains__, ids)))

    def pin_anonymous(self, proc_id, n):
        """Allocate ``n`` non-evictable anonymous pages for ``proc_id``
        (filled once, never touched again; swap is off)."""
        self.process(proc_id)
        fid = f"anon:{proc_id}"
        pages = self._anon.setdefault(fid, [])
        if fid not in self.files:
            self.files[fid] = FileObject(fid, max(n, 1), "anonymous", False, proc_id)
        f = self.files[fid]
        new = []
        for _ in range(n):
            pg = PageId(fid, len(pages))
            pages.append(pg)
            new.append(pg)
            self.state.insert_unevictable(pg)
        f.num_pages = max(f.num_pages, len(pages))
        return new

    def anonymous_pages(self, proc_id):
        return list(self._anon.get(f"anon:{proc_id}", []))

    def release_anonymous(self, proc_id):
        for pg in self._anon.pop(f"anon:{proc_id}", []):
            self.state.unevictable.pop(pg, None)

    # -- working sets -------------------------------------------------------

    def share_count(self, page):
        return min(SHARE_COUNT_CAP, self._sharers.get(page, 0))

    def sharers(self, page):
        return self._sharers.get(page, 0)

    def _ws_touch(self, proc, page):
        ws = proc.working_set
        if page in ws:
            ws.move_to_end(page)
            return
        if len(ws) >= proc.ws_max_pages:
            self._ws_trim(proc, proc.ws_max_pages - 1)
            if len(ws) >= proc.ws_max_pages:
                raise WorkingSetError(f"working set of {proc.id!r} is full of locked pages")
        ws[page] = False
        self._sharers[page] = self._sharers.get(page, 0) + 1

    def _ws_drop(self, proc, page):
        del proc.working_set[page]
        n = self._sharers[page] - 1
        if n:
            self._sharers[page] = n
        else:
            del self._sharers[page]

    def _ws_trim(self, proc, limit):
        ws = proc.working_set
        excess = len(ws) - limit
        if excess <= 0:
            return []
        victims = []
        for pg, locked in ws.items():
            if not locked:
                victims.append(pg)
                if len(victims) == excess:
                    break
        for pg in victims:
            self._ws_drop(proc, pg)
        return victims

    def lock_page(self, proc_id, page):
        """VirtualLock: bring the page into the working set and pin it there."""
        proc = self.process(proc_id)
        locked = sum(1 for v in proc.working_set.values() if v)
        if page not in proc.working_set or not proc.working_set[page]:
            if locked + 1 >= proc.ws_max_pages:
                raise WorkingSetError(f"locking would leave no unlocked slot in {proc_id!r}")
        self.access_page(proc_id, page)
        proc.working_set[page] = True

    def unlock_or_drop(self, proc_id, page):
        """VirtualUnlock semantics: unlock a locked page, drop an unlocked one
        from the working set.  Returns ``"unlocked"``, ``"dropped"`` or None."""
        proc = self.process(proc_id)
        ws = proc.working_set
        if page not in ws:
            return None
        if ws[page]:
            ws[page] = False
            return "unlocked"
        self._ws_drop(proc, page)
        return "dropped"

    def set_process_working_set_size(self, caller, target, min_pages, max_pages):
        """Returns the pages dropped from the target's working set."""
        t = self.process(target)
        if caller != target and not self.has_quota(caller, target):
            raise PermissionDenied(
                f"{caller!r} lacks PROCESS_SET_QUOTA over {target!r}", "process_set_quota")
        max_pages = max(int(max_pages), WS_FLOOR_PAGES)
        if min_pages < 0 or min_pages > max_pages:
            raise WorkingSetError(f"min {min_pages} outside [0, {max_pages}]")
        if len(t.locked_pages()) > max_pages:
            raise WorkingSetError(f"{target!r} has more locked pages than {max_pages}")
        t.ws_min_pages, t.ws_max_pages = int(min_pages), max_pages
        return self._ws_trim(t, max_pages)

    def empty_working_set(self, caller, target):
        """SetProcessWorkingSetSize(-1, -1): drop every unlocked page."""
        t = self.process(target)
        if caller != target and not self.has_quota(caller, target):
            raise PermissionDenied(
                f"{caller!r} lacks PROCESS_SET_QUOTA over {target!r}", "process_set_quota")
        return self._ws_trim(t, len(t.locked_pages()))

    # -- inspection -------------------------------------------------------

    def dump(self, *, include_clock=True):
        """Line-oriented snapshot used by golden tests and fingerprints."""
        st = self.state
        out = ["# pagecache-lab state v1", f"regime {self.regime.value}",
               f"capacity {st.capacity_pages}"]
        if include_clock:
            out.append(f"clock {st.clock}")
        for name, lst in ((INACTIVE, st.inactive), (ACTIVE, st.active)):
            for pg, e in lst.items():
                out.append(f"{name} {pg.file} {pg.index} {int(e.referenced)} {e.last_access}")
        for pg in st.unevictable:
            out.append(f"unevictable {pg.file} {pg.index}")
        for pg in st.ghost:
            out.append(f"ghost {pg.file} {pg.index}")
        for pid in sorted(self.processes):
            p = self.processes[pid]
            out.append(f"wsbounds {pid} {p.ws_min_pages} {p.ws_max_pages}")
            for pg, locked in p.working_set.items():
                out.append(f"ws {pid} {pg.file} {pg.index} {int(locked)}")
        return "\n".join(out) + "\n"

    def fingerprint(self):
        """Hash of the cache and working-set state, clock excluded."""
        return hashlib.sha256(self.dump(include_clock=False).encode()).hexdigest()

    def check_invariants(self):
        st = self.state
        if len(st) > st.capacity_pages:
            raise InvariantViolation(f"{len(st)} resident pages exceed capacity {st.capacity_pages}")
        if len(st.ghost) > st.ghost_capacity:
            raise InvariantViolation("ghost list over capacity")
        overlap = [pg for pg in st.ghost if st.resident(pg)]
        if overlap:
            raise InvariantViolation(f"ghost list holds resident pages: {overlap[:3]}")
        if set(st.inactive) & set(st.active):
            raise InvariantViolation("page on both lists")
        for lst, name in ((st.inactive, INACTIVE), (st.active, ACTIVE)):
            for pg, e in lst.items():
                if e.list != name or e.page != pg:
                    raise InvariantViolation(f"entry for {pg} misfiled")
        recount = {}
        for p in self.processes.values():
            if len(p.working_set) > p.ws_max_pages:
                raise InvariantViolation(f"working set of {p.id!r} over its maximum")
            if self.regime is Regime.WINDOWS and p.ws_max_pages < WS_FLOOR_PAGES:
                raise InvariantViolation(f"{p.id!r} ws_max below floor")
            for pg in p.working_set:
                if not st.resident(pg):
                    raise InvariantViolation(f"working-set page {pg} of {p.id!r} not cached")
                recount[pg] = recount.get(pg, 0) + 1
            for fid in p.mappings:
                if p.id not in self.files[fid].mapped_by:
                    raise InvariantViolation(f"mapping bookkeeping mismatch for {fid!r}")
        if recount != self._sharers:
            raise InvariantViolation("share counts disagree with working sets")
