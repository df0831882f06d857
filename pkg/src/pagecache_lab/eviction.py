"""Targeted page eviction.

Linux: three attacker-built page sets.  Set 1 holds pages that are already
cached and get re-referenced so the replacement policy keeps them; set 2 holds
uncached filler pages touched in random order to create pressure; set 3 is a
block of non-evictable anonymous memory that shrinks the effective cache.  The
run polls the targets with ``mincore`` after every round and stops as soon as
they are gone.

Windows: the target only has to leave the victim's working set, which
VirtualUnlock (own process) or a working-set shrink (other process, needs
PROCESS_SET_QUOTA) does directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cache import PageId, Regime, WS_FLOOR_PAGES
from .errors import EvictionSetError, PermissionDenied
from .probe import mincore, virtual_unlock
from .readahead import window_bounds


@dataclass
class EvictionSetBundle:
    set1: list
    set2: list
    set3: list
    guard: set
    targets: frozenset = frozenset()
    cursor: int = 0  # next set2 position; persists across runs
    _files: frozenset | None = field(default=None, repr=False, compare=False)

    def files(self):
        if self._files is None:
            self._files = frozenset(p.file for p in self.set1) | frozenset(p.file for p in self.set2)
        return self._files

    def check(self):
        s1, s2, s3 = set(self.set1), set(self.set2), set(self.set3)
        if s1 & s2 or s1 & s3 or s2 & s3 or self.guard & (s1 | s2 | s3):
            raise EvictionSetError("eviction sets overlap")
        if self.targets & (s1 | s2 | s3 | self.guard):
            raise EvictionSetError("a target page sits in an eviction set")


@dataclass
class EvictionReport:
    rounds: int
    pages_touched: int
    succeeded: bool
    elapsed_ns: int
    pages_brought_in: int = 0
    targets: tuple = ()
    set1_survival: float = 1.0
    guard_survival: float = 1.0
    set2_accesses: list = field(default_factory=list, repr=False)  # per round

    CSV_FIELDS = ("rounds", "pages_touched", "pages_brought_in", "succeeded",
                  "elapsed_ns", "set1_survival", "guard_survival")

    def row(self):
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def _target_windows(system, targets):
    pages = set()
    for t in targets:
        f = system.file(t.file)
        start, end = window_bounds(system.readahead, t.index, f.num_pages)
        pages.update(PageId(t.file, i) for i in range(start, end))
    return pages


def survey_cache(system, attacker, files, *, targets=(), set3_fraction=0.0, seed=None):
    """Map the readable ``files`` and sort their pages into eviction sets.

    ``targets`` registers pages whose readahead windows become the guard: the
    rest of each window is kept hot and never used as filler, so eviction
    pressure cannot drag a target back in through readahead.
    """
    readable = [f for f in files if system.can_read(attacker, f)]
    if not readable:
        raise EvictionSetError(f"{attacker!r} cannot read any of the surveyed files")
    targets = frozenset(targets)

    set3 = system.anonymous_pages(attacker)
    want = int(set3_fraction * system.state.capacity_pages)
    if want > len(set3):
        set3 += system.pin_anonymous(attacker, want - len(set3))

    windows = _target_windows(system, targets)
    guard = windows - targets
    set1, set2 = [], []
    for fid in readable:
        system.map_file(attacker, fid)
        vec = mincore(system, attacker, fid)
        for i, present in enumerate(vec):
            pg = PageId(fid, i)
            if pg in windows:
                continue
            (set1 if present else set2).append(pg)
    rng = system.rng(f"survey:{attacker}" if seed is None else f"survey:{attacker}:{seed}")
    rng.shuffle(set2)
    bundle = EvictionSetBundle(set1, set2, list(set3), guard, targets)
    bundle.check()
    return bundle


def register_targets(system, bundle, targets):
    """Return a bundle with extra registered targets: their windows move out
    of set 1/set 2 into the guard."""
    targets = frozenset(bundle.targets) | frozenset(targets)
    windows = _target_windows(system, targets)
    guard = windows - targets
    set1, set2 = bundle.set1, bundle.set2
    if {p.file for p in windows} & bundle.files():
        set1 = [p for p in set1 if p not in windows]
        set2 = [p for p in set2 if p not in windows]
    out = EvictionSetBundle(set1, set2, bundle.set3, guard, targets, bundle.cursor)
    out._files = bundle._files
    return out


def evict_page_linux(system, attacker, target, bundle, *, max_rounds=None):
    if target not in bundle.targets:
        raise EvictionSetError(f"target {target} not registered with the bundle (no guard)")
    return evict_pages_linux(system, attacker, [target], bundle, max_rounds=max_rounds)


def evict_pages_linux(system, attacker, targets, bundle, *, max_rounds=None):
    """Evict every page in ``targets`` from the global cache.

    Set-2 budget starts at capacity/8 pages per round, doubles after each
    round that leaves a target resident, and is capped at 2x capacity.  The
    first round touches each filler page once, which only churns the inactive
    list; later rounds touch every fetched filler window a second time so the
    active list turns over as well and active targets get demoted.  Set 1
    and the resident guard pages are re-referenced at the start of each round
    and again whenever capacity/8 new pages have come in, which is often
    enough that the active list can never cycle past a kept page twice.  A run
    makes at most one pass over set 2; running out leaves ``succeeded`` false.
    """
    if system.regime is not Regime.LINUX:
        raise EvictionSetError("page-cache eviction sets need the linux_global regime")
    resident = system.state.resident
    targets = list(dict.fromkeys(targets))
    mapped = system.process(attacker).mappings
    for fid in {t.file for t in targets} - mapped:
        system.map_file(attacker, fid)  # polling the targets needs a mapping
    remaining = [t for t in targets if resident(t)]
    keep = [p for p in bundle.set1 if resident(p)]
    guard = [p for p in bundle.guard if resident(p)]
    if not remaining:
        return EvictionReport(0, 0, True, 0, targets=tuple(targets))

    cap = system.state.capacity_pages
    budget = max(1, cap // 8)
    interval = max(1, min(cap // 8, len(keep) // 2 or cap // 8))
    n2 = len(bundle.set2)
    start_clock = system.clock
    rounds = touched = brought_total = examined = 0
    per_round = []

    kept = keep + guard

    def keep_alive():
        system.touch_resident(attacker, kept)

    with system.flat_cost(system.costs.linux_evict_ns):
        while remaining:
            if max_rounds is not None and rounds >= max_rounds:
                break
            if examined >= n2:
                break
            rounds += 1
            keep_alive()
            brought = since_keep = accesses = 0
            while brought < budget and examined < n2:
                p = bundle.set2[bundle.cursor % n2]
                bundle.cursor += 1
                examined += 1
                if resident(p):
                    continue
                got = system.access_page(attacker, p)
                accesses += 1
                if rounds > 1 and got:
                    # touch the fetched window again: the hits activate it and
                    # push the active list along as fast as the inactive one
                    start, end = window_bounds(system.readahead, p.index, system.file(p.file).num_pages)
                    accesses += system.touch_resident(
                        attacker, [PageId(p.file, i) for i in range(start, end)])
                brought += got
                since_keep += got
                if since_keep >= interval:
                    keep_alive()
                    since_keep = 0
            touched += accesses
            brought_total += brought
            per_round.append(accesses)
            remaining = [t for t in remaining if resident(t)]  # the mincore poll
            budget = min(budget * 2, 2 * cap)

    survived = sum(1 for p in keep if resident(p))
    guard_kept = sum(1 for p in guard if resident(p))
    return EvictionReport(
        rounds=rounds,
        pages_touched=touched,
        succeeded=not remaining,
        elapsed_ns=system.clock - start_clock,
        pages_brought_in=brought_total,
        targets=tuple(targets),
        set1_survival=survived / len(keep) if keep else 1.0,
        guard_survival=guard_kept / len(guard) if guard else 1.0,
        set2_accesses=per_round,
    )


def evict_page_windows(system, attacker, victim, target):
    """Remove ``target`` from ``victim``'s working set; it stays cached.

    Own process: VirtualUnlock (twice if the page was locked).  Other process:
    shrink the victim to the 13-page floor and, if the target is among the
    most recent pages, empty the victim's working set.
    """
    if system.regime is not Regime.WINDOWS:
        raise EvictionSetError("working-set eviction needs the windows_working_set regime")
    v = system.process(victim)
    if target not in v.working_set:
        return EvictionReport(0, 0, True, 0, targets=(target,))
    if attacker != victim and not system.has_quota(attacker, victim):
        raise PermissionDenied(
            f"{attacker!r} can neither unlock in nor shrink {victim!r}", "process_set_quota")
    start = system.clock
    touched = 0
    with system.flat_cost(system.costs.windows_evict_ns):
        if attacker == victim:
            for _ in range(2):
                if target in v.working_set:
                    virtual_unlock(system, attacker, target)
                    touched += 1
        else:
            system.set_process_working_set_size(
                attacker, victim, min(v.ws_min_pages, WS_FLOOR_PAGES), WS_FLOOR_PAGES)
            touched += 1
            if target in v.working_set:
                system.empty_working_set(attacker, victim)
                touched += 1
    ok = target not in v.working_set
    return EvictionReport(1, touched, ok, system.clock - start, targets=(target,))
