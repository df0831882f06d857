"""Side-channel attacks built on the probe and eviction primitives.

* template scans that find the page a victim event loads,
* a monitor that waits for that page to come back (event triggers,
  keystroke timing, the periodic-event eviction bench),
* candidate generation for passwords seeded with the event's microsecond
  timestamp,
* a strcmp length oracle that leaks a secret one byte per page-boundary
  crossing.
"""

from __future__ import annotations

import random
import string
from collections import Counter
from dataclasses import dataclass, field, replace

from .cache import PageId, Regime, System
from .errors import EvictionSetError, PermissionDenied
from .eviction import (
    EvictionReport, evict_page_windows, evict_pages_linux, register_targets, survey_cache,
)
from .probe import madvise_dontneed, mincore, query_working_set


@dataclass(frozen=True)
class EventTemplate:
    target: PageId
    label: str
    correlation: float

    def __post_init__(self):
        if not 0.0 <= self.correlation <= 1.0:
            raise ValueError(f"correlation {self.correlation} outside [0, 1]")


# -- victim scripts -----------------------------------------------------------


@dataclass
class VictimTouch:
    """Agenda action: ``proc`` touches ``pages`` at logical time ``at``."""

    proc: str
    pages: tuple
    at: int
    fired: list

    def __call__(self, system):
        for pg in self.pages:
            system.access_page(self.proc, pg)
        self.fired.append(self.at)


def schedule_touches(system, proc, pages, times_ns):
    """Queue one touch of ``pages`` per time.  Returns the list the actions
    append their times to as they run."""
    fired = []
    pages = tuple(pages)
    for pg in pages:
        if pg.file not in system.process(proc).mappings:
            system.map_file(proc, pg.file)
    for t in times_ns:
        system.schedule(t, VictimTouch(proc, pages, int(t), fired))
    return fired


@dataclass
class _BackgroundTouch:
    proc: str
    page: PageId

    def __call__(self, system):
        system.access_page(self.proc, self.page)


def schedule_background(system, proc, pages, rate_per_s, start_ns, until_ns, *, seed=0):
    """Poisson stream of touches on random ``pages`` (unrelated activity)."""
    pages = list(pages)
    if not pages or rate_per_s <= 0:
        return 0
    for fid in {pg.file for pg in pages}:
        if fid not in system.process(proc).mappings:
            system.map_file(proc, fid)
    rng = system.rng(f"background:{proc}:{seed}")
    t, n = start_ns, 0
    while True:
        t += int(rng.expovariate(rate_per_s) * 1e9) + 1
        if t >= until_ns:
            return n
        system.schedule(t, _BackgroundTouch(proc, rng.choice(pages)))
        n += 1


# -- templating ----------------------------------------------------------------


def template_scan(system, attacker, event, files, trials, *, background=None, label=None):
    """Replay ``event(system)`` ``trials`` times and rank every page of
    ``files`` by how often it was cached afterwards.

    Between trials the files are purged (this is offline profiling on a
    machine the attacker controls) and readahead is off, so a page only shows
    up if the event itself touched it.  ``background(system, trial)`` runs
    after the event in each trial.
    """
    if trials < 1:
        raise ValueError("template_scan needs at least one trial")
    label = label or getattr(event, "label", None) or "event"
    counts = Counter()
    saved = system.readahead
    system.readahead = replace(saved, enabled=False)
    try:
        for t in range(trials):
            for fid in files:
                system.purge_file(fid)
            with system.uncharged():
                event(system)
                if background is not None:
                    background(system, t)
            for fid in files:
                with system.mapped(attacker, fid):
                    vec = mincore(system, attacker, fid)
                for i, present in enumerate(vec):
                    if present:
                        counts[PageId(fid, i)] += 1
    finally:
        system.readahead = saved
    out = [EventTemplate(pg, label, counts[pg] / trials)
           for fid in files for pg in system.pages(fid)]
    out.sort(key=lambda t: -t.correlation)  # stable: file order, then index
    return out


# -- monitoring -----------------------------------------------------------------


class Monitor:
    """Watches one page for a victim access.

    Linux: ``mincore`` on the page, re-armed with an eviction run.  Windows:
    the attacker keeps the page locked in its own working set and watches the
    share count rise to 2; re-armed by trimming the victim's working set.

    Victim accesses that land while an eviction is running are folded into
    it: they leave no trace once the eviction finishes.
    """

    def __init__(self, system, attacker, target, *, victim=None, bundle=None, max_rearm=3):
        self.system = system
        self.attacker = attacker
        self.target = target
        self.victim = victim
        self.max_rearm = max_rearm
        self.windows = system.regime is Regime.WINDOWS
        self.probes = 0
        self.folded = 0  # agenda actions run inside eviction windows
        self.reports = []
        if self.windows:
            if victim is None:
                raise EvictionSetError("the working-set monitor needs the victim process")
            if target.file not in system.process(attacker).mappings:
                system.map_file(attacker, target.file)
            system.lock_page(attacker, target)
            self.probe_cost = system.costs.qws_ns
            self.evict_cost = system.costs.windows_evict_ns
        else:
            if bundle is None:
                raise EvictionSetError("the page-cache monitor needs an eviction set bundle")
            if target not in bundle.targets:
                bundle = register_targets(system, bundle, [target])
            self.bundle = bundle
            if target.file not in system.process(attacker).mappings:
                system.map_file(attacker, target.file)
            self.probe_cost = system.costs.mincore_ns
            self.evict_cost = system.costs.linux_evict_ns
        self.armed = False

    def probe(self):
        s = self.system
        self.probes += 1
        if self.windows:
            rec = query_working_set(s, self.attacker, self.attacker, [self.target])[0]
            if rec.share_count is None:
                raise PermissionDenied("share count not exposed", "share_count_omitted")
            return rec.share_count >= 2
        return mincore(s, self.attacker, self.target.file, self.target.index, 1)[0]

    def _gone(self):
        if self.windows:
            return self.target not in self.system.process(self.victim).working_set
        return not self.system.is_resident(self.target)

    def rearm(self):
        """Evict the target (retrying up to ``max_rearm`` times).  Returns
        whether the monitor is armed again."""
        s = self.system
        for _ in range(self.max_rearm):
            self.folded += s.run_due(s.clock + self.evict_cost)
            if self.windows:
                rep = evict_page_windows(s, self.attacker, self.victim, self.target)
            else:
                rep = evict_pages_linux(s, self.attacker, [self.target], self.bundle)
            self.reports.append(rep)
            if self._gone():
                break
        self.armed = self._gone()
        return self.armed

    def watch(self, budget_ns):
        """Poll until the target shows up or ``budget_ns`` runs out.  Returns
        the detection time or None.

        A probe reports the state at the end of its call.  Stretches with
        nothing scheduled are fast-forwarded; the polls they stand for are
        still counted and charged.
        """
        s = self.system
        cost = self.probe_cost
        end = s.clock + budget_ns
        while s.clock < end:
            s.run_due(s.clock + cost)
            if self.probe():
                self.armed = False
                return s.clock
            nxt = s.next_scheduled()
            limit = end if nxt is None else min(nxt, end)
            skip = (limit - s.clock - 1) // cost
            if skip > 0:
                s.advance_clock(skip * cost)
                self.probes += skip
        return None

    def run(self, until_ns, on_sample=None):
        """Detect, re-arm, repeat until ``until_ns``.  ``on_sample(time,
        value)`` sees every 0/1 transition.  Returns detection times."""
        s = self.system
        found = []
        if not self.armed:
            self.rearm()
        if on_sample:
            on_sample(s.clock, 0 if self.armed else 1)
        while s.clock < until_ns:
            if not self.armed:
                if self.rearm() and on_sample:
                    on_sample(s.clock, 0)
                continue
            t = self.watch(until_ns - s.clock)
            if t is None:
                break
            found.append(t)
            if on_sample:
                on_sample(t, 1)
        return found


def watch_event(system, attacker, template, budget_ns, *, victim=None, bundle=None,
                fired=None, monitor=None):
    """Wait up to ``budget_ns`` for the template page to be touched.

    Returns the detection latency in ns (detection time minus the latest
    victim event in ``fired``), or None if nothing was seen.  Without
    ``fired`` the detection time itself is returned.
    """
    mon = monitor or Monitor(system, attacker, template.target, victim=victim, bundle=bundle)
    if not mon.armed:
        mon.rearm()
    t = mon.watch(budget_ns)
    if t is None:
        return None
    if fired:
        return t - fired[-1]
    return t


@dataclass
class KeystrokeTrace:
    samples: list  # (time ns, 0/1) at every transition
    detected_events: list
    keypresses: list = field(default_factory=list)
    probe_count: int = 0
    folded: int = 0

    CSV_FIELDS = ("time", "value")

    def rows(self):
        return [{"time": f"{t / 1e9:.9f}", "value": v} for t, v in self.samples]

    def score(self, window_ns):
        return match_events(self.keypresses, self.detected_events, window_ns)


def match_events(events, detections, window_ns):
    """Pair each detection with the earliest unmatched event at most
    ``window_ns`` before it.  Returns (true positives, false positives,
    false negatives)."""
    events = sorted(events)
    used = [False] * len(events)
    tp = fp = 0
    j = 0
    for d in sorted(detections):
        while j < len(events) and events[j] < d - window_ns:
            j += 1
        hit = next((k for k in range(j, len(events))
                    if events[k] <= d and not used[k]), None)
        if hit is not None:
            used[hit] = True
            tp += 1
        else:
            fp += 1
    return tp, fp, len(events) - tp


def keystroke_monitor(system, attacker, template, key_times_ns, *, victim, until_ns=None,
                      bundle=None, monitor=None):
    """Run the victim's keypress script against a monitor on the template
    page and record the 0/1 trace."""
    fired = schedule_touches(system, victim, [template.target], key_times_ns)
    mon = monitor or Monitor(system, attacker, template.target, victim=victim, bundle=bundle)
    if until_ns is None:
        last = max(key_times_ns, default=system.clock)
        until_ns = last + 2 * mon.evict_cost + mon.probe_cost
    samples = []

    def sample(t, v):
        if not samples or samples[-1][1] != v:
            samples.append((t, v))

    found = mon.run(until_ns, sample)
    return KeystrokeTrace(samples, found, fired, mon.probes, mon.folded)


@dataclass
class BenchResult:
    reports: list
    events: list
    detections: list
    precision: float
    recall: float
    f_score: float

    @property
    def mean_eviction_ns(self):
        done = [r for r in self.reports if r.rounds]  # skip no-op runs (target already gone)
        return sum(r.elapsed_ns for r in done) / len(done) if done else 0.0

    def summary(self):
        return {"events": len(self.events), "detections": len(self.detections),
                "precision": round(self.precision, 6), "recall": round(self.recall, 6),
                "f_score": round(self.f_score, 6), "evictions": sum(1 for r in self.reports if r.rounds),
                "mean_eviction_ms": round(self.mean_eviction_ns / 1e6, 6)}


def bench_eviction(system, attacker, target, *, victim, bundle=None, period_ns=1_000_000_000,
                   events=60, match_window_ns=None):
    """Monitor a victim event that fires every ``period_ns`` and score the
    detections against the script."""
    start = system.clock + period_ns
    times = [start + k * period_ns for k in range(events)]
    tmpl = EventTemplate(target, "periodic", 1.0)
    mon = Monitor(system, attacker, target, victim=victim, bundle=bundle)
    trace = keystroke_monitor(system, attacker, tmpl, times, victim=victim, monitor=mon)
    window = match_window_ns if match_window_ns is not None else 2 * mon.probe_cost
    tp, fp, fn = trace.score(window)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return BenchResult(mon.reports, trace.keypresses, trace.detected_events, precision, recall, f)


# -- lab setup --------------------------------------------------------------------


@dataclass
class Lab:
    system: System
    attacker: str
    victim: str
    target: PageId
    bundle: object = None


def build_lab(regime=Regime.LINUX, *, seed=0, capacity_pages=2048, lib_pages=64, target_index=14,
              filler_files=8, filler_pages=1024, shared_files=6, shared_pages=512,
              warmup_touches=4000, set3_fraction=0.25):
    """A victim library with one event page, an attacker, and a background
    process that has warmed up the cache with shared and private files.

    Linux gets an eviction set bundle with the target registered.
    """
    regime = Regime(regime)
    s = System(regime, capacity_pages, seed=seed)
    s.add_process("background")
    s.add_process("victim")
    s.add_process("attacker")
    lib = "libgksu2.so"
    s.add_file(lib, lib_pages, label="victim library")
    s.map_file("victim", lib)
    target = PageId(lib, target_index)
    if regime is Regime.WINDOWS:
        return Lab(s, "attacker", "victim", target)
    shared = [f"shared{i}" for i in range(shared_files)]
    private = [f"private{i}" for i in range(max(1, shared_files // 2))]
    for fid in shared:
        s.add_file(fid, shared_pages)
        s.map_file("background", fid)
    for fid in private:
        s.add_file(fid, shared_pages, attacker_readable=False, owner="background")
        s.map_file("background", fid)
    fillers = [f"filler{i}" for i in range(filler_files)]
    for fid in fillers:
        s.add_file(fid, filler_pages)
    rng = random.Random(f"lab:{seed}")
    pool = shared + private
    for _ in range(warmup_touches):
        s.access_page("background", PageId(rng.choice(pool), rng.randrange(shared_pages)))
    bundle = survey_cache(s, "attacker", shared + fillers, targets=[target],
                          set3_fraction=set3_fraction, seed=seed)
    return Lab(s, "attacker", "victim", target, bundle)


# -- microtime-seeded passwords ------------------------------------------------


@dataclass(frozen=True)
class StandInPasswordGenerator:
    """Deterministic seed -> password map standing in for a web app that
    seeds its PRNG with the current microsecond timestamp.  Not compatible
    with any real runtime's generator."""

    length: int = 12
    alphabet: str = string.ascii_letters + string.digits

    def __call__(self, seed):
        rng = random.Random(seed)
        return "".join(rng.choice(self.alphabet) for _ in range(self.length))


@dataclass(frozen=True)
class CandidateSet:
    center_us: int
    radius_us: int
    seeds: range
    candidates: tuple

    def __post_init__(self):
        want = max(1, 2 * self.radius_us)
        if len(self.candidates) != want or len(self.seeds) != want:
            raise ValueError("one candidate per microsecond tick")

    def __contains__(self, password):
        return password in self.candidates

    def __len__(self):
        return len(self.candidates)


def recover_prng_passwords(detection_time_us, uncertainty_us, generator=None):
    """Every password the generator yields for a seed in
    [detection - uncertainty, detection + uncertainty); a zero uncertainty
    gives the detection tick alone."""
    if uncertainty_us < 0:
        raise ValueError("uncertainty must be >= 0")
    gen = generator or StandInPasswordGenerator()
    c, r = int(detection_time_us), int(uncertainty_us)
    seeds = range(c - r, c + r) if r else range(c, c + 1)
    return CandidateSet(c, r, seeds, tuple(gen(x) for x in seeds))


# -- length oracle ---------------------------------------------------------------

EXCHANGE_PAGES = 64
BOUNDARY_PAGE = 31  # last page of the first readahead window


@dataclass
class StrcmpVictim:
    """A victim that compares an attacker-supplied string with its secret
    using strcmp.  The guess is laid out so its last byte is the last byte
    of ``boundary_page``; the terminator after it sits on the next page.
    """

    proc: str
    secret: str
    exchange_file: str = "exchange.bin"
    boundary_page: int = BOUNDARY_PAGE
    calls: int = 0

    def _touch(self, system, index):
        if system.regime is Regime.WINDOWS:
            system.access_page(self.proc, PageId(self.exchange_file, index))
        else:
            system.read_file(self.proc, self.exchange_file, index, 1)

    def __call__(self, system, guess):
        self.calls += 1
        if "\0" in self.secret:
            raise ValueError("secret may not contain NUL")
        n = len(guess)
        touched = set()
        i = 0
        while True:
            # byte i of the guess: page boundary_page for i < n, the next one after
            page = self.boundary_page if i < n else self.boundary_page + 1
            if page not in touched:
                self._touch(system, page)
                touched.add(page)
            g = guess[i] if i < n else "\0"
            c = self.secret[i] if i < len(self.secret) else "\0"
            if g != c or g == "\0":
                return g == c
            i += 1


def oracle_system(regime=Regime.LINUX, secret="", *, seed=0, capacity_pages=4096):
    """Victim + attacker sharing a 64-page exchange file."""
    s = System(regime, capacity_pages, seed=seed)
    s.add_process("victim")
    s.add_process("attacker")
    victim = StrcmpVictim("victim", secret)
    s.add_file(victim.exchange_file, EXCHANGE_PAGES, label="request buffer")
    if s.regime is Regime.WINDOWS:
        s.map_file("victim", victim.exchange_file)
    return s, victim


@dataclass
class OracleResult:
    prefix: str
    queries: int
    complete: bool  # the secret's end was seen


def length_oracle_attack(system, attacker, victim_compare, alphabet, max_len):
    """Recover the victim's secret byte by byte.

    For each position, try the symbols in order until the page after the
    boundary gets loaded (or, on Windows, enters the victim's working set).
    The search stops when the comparison accepts the guess, or when no symbol
    loads the page (the secret ended before this position).
    """
    alphabet = list(dict.fromkeys(alphabet))
    fid = victim_compare.exchange_file
    probe_page = PageId(fid, victim_compare.boundary_page + 1)
    windows = system.regime is Regime.WINDOWS
    if fid not in system.process(attacker).mappings:
        system.map_file(attacker, fid)
    if windows:
        system.lock_page(attacker, probe_page)
        victim = victim_compare.proc

    def loaded():
        if windows:
            rec = query_working_set(system, attacker, attacker, [probe_page])[0]
            if rec.share_count is None:
                raise PermissionDenied("share count not exposed", "share_count_omitted")
            return rec.share_count >= 2
        return mincore(system, attacker, fid, probe_page.index, 1)[0]

    def reset():
        if windows:
            evict_page_windows(system, attacker, victim, probe_page)
        elif not madvise_dontneed(system, attacker, probe_page):
            raise EvictionSetError("exchange page is mapped by someone else")

    if loaded():
        reset()
    prefix, queries = "", 0
    while len(prefix) < max_len:
        for sym in alphabet:
            queries += 1
            with system.uncharged():
                accepted = victim_compare(system, prefix + sym)
            if loaded():
                reset()
                prefix += sym
                if accepted:  # the whole guess matched: the login went through
                    return OracleResult(prefix, queries, True)
                break
        else:
            return OracleResult(prefix, queries, True)
    return OracleResult(prefix, queries, False)


__all__ = [
    "BenchResult", "CandidateSet", "EventTemplate", "EvictionReport", "KeystrokeTrace", "Lab",
    "Monitor", "OracleResult", "StandInPasswordGenerator", "StrcmpVictim", "VictimTouch",
    "bench_eviction", "build_lab", "keystroke_monitor", "length_oracle_attack", "match_events",
    "oracle_system", "recover_prng_passwords", "schedule_background", "schedule_touches",
    "template_scan", "watch_event",
]
