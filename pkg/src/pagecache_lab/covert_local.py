"""Local covert channel over shared read-only file pages.

A frame is one page per readahead window across the frame files.  The first
slots carry the handshake (two alternating READY pages, plus one ACK page on
Linux or two alternating ACK pages on Windows); the rest are data bits.

Linux: a set bit is a cached page.  The receiver reads the frame with
``mincore`` and the sender clears it with one multi-target eviction run per
message.

Windows: every frame page is locked in the receiver's working set, so a page's
share count is 1 + (number of senders holding it).  The sender sets bits by
touching pages and clears them with VirtualUnlock; the receiver only ever
queries its own working set, so no cross-process permission is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .cache import PAGE_SIZE, SHARE_COUNT_CAP, PageId, Regime
from .errors import ChannelError, ChannelTimeout, PermissionDenied
from .eviction import evict_pages_linux, survey_cache
from .probe import mincore, mincore_pages, query_working_set, virtual_unlock
from .readahead import min_safe_stride


def frame_capacity(file_bytes, window_pages=32):
    """Data-page slots a file of ``file_bytes`` offers at one page per
    readahead window.  Control pages are the caller's business."""
    return max(0, int(file_bytes) // (PAGE_SIZE * window_pages))


@dataclass(frozen=True)
class ChannelFrame:
    ready_pages: tuple
    ack_pages: tuple
    bit_pages: tuple
    stride: int = 32

    @property
    def width_bits(self):
        return len(self.bit_pages)

    @property
    def control_pages(self):
        return self.ready_pages + self.ack_pages

    def all_pages(self):
        return self.control_pages + self.bit_pages

    def check(self):
        pages = self.all_pages()
        if len(set(pages)) != len(pages):
            raise ChannelError("frame pages are not distinct")
        if len(self.ready_pages) != 2 or len(self.ack_pages) not in (1, 2):
            raise ChannelError("frame needs 2 READY pages and 1 or 2 ACK pages")
        by_file = {}
        for pg in pages:
            by_file.setdefault(pg.file, []).append(pg.index)
        for fid, idx in by_file.items():
            windows = [i // self.stride for i in idx]
            if len(set(windows)) != len(windows):
                raise ChannelError(f"two frame pages of {fid!r} share a readahead window")


def build_frame(system, files, *, max_bits=None, ack_pages=None):
    """Lay a frame over ``files``: slot k of a file is page k*stride.  Control
    pages take the first slots."""
    stride = min_safe_stride(system.readahead)
    n_ack = ack_pages or (2 if system.regime is Regime.WINDOWS else 1)
    slots = []
    for fid in files:
        f = system.file(fid)
        slots.extend(PageId(fid, i) for i in range(0, f.num_pages, stride))
    n_ctrl = 2 + n_ack
    if len(slots) <= n_ctrl:
        raise ChannelError(f"files {list(files)} give {len(slots)} slots; need more than {n_ctrl}")
    bits = slots[n_ctrl:]
    if max_bits is not None:
        bits = bits[:max_bits]
    frame = ChannelFrame(tuple(slots[:2]), tuple(slots[2:n_ctrl]), tuple(bits), stride)
    frame.check()
    return frame


@dataclass
class TransmissionStats:
    bits_sent: int = 0
    bit_errors: int = 0
    elapsed_ns: int = 0
    messages: int = 0

    CSV_FIELDS = ("bits_sent", "bit_errors", "ber", "messages", "elapsed_ns",
                  "throughput_bytes_per_s", "throughput_kib_per_s")

    def __post_init__(self):
        if self.bit_errors > self.bits_sent:
            raise ValueError("more bit errors than bits")

    @property
    def ber(self):
        return self.bit_errors / self.bits_sent if self.bits_sent else 0.0

    @property
    def throughput_bytes_per_s(self):
        if not self.elapsed_ns:
            return 0.0
        return self.bits_sent / 8 / (self.elapsed_ns / 1e9)

    @property
    def throughput_kib_per_s(self):
        return self.throughput_bytes_per_s / 1024

    def row(self):
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


@dataclass
class LocalChannelConfig:
    frame_files: tuple
    filler_files: tuple = ()  # linux: where the sender's eviction sets come from
    set3_fraction: float = 0.0
    max_bits: int | None = None
    level_bits: int = 1  # windows only; 2 packs two bits into one share count
    max_polls: int = 1000
    noise_rate_per_s: float = 0.0
    noise_hold_ns: int = 10_000_000  # windows: how long a noise touch stays in a working set
    noise_touches: int = 2  # repeated use of a page, which also activates it on linux

    def __post_init__(self):
        if not self.frame_files:
            raise ValueError("frame_files must not be empty")
        if self.level_bits not in (1, 2):
            raise ValueError("level_bits must be 1 or 2")
        if self.noise_rate_per_s < 0:
            raise ValueError("noise_rate_per_s must be >= 0")


def _chunks(bits, width):
    for i in range(0, len(bits), width):
        yield bits[i:i + width]


class LocalChannel:
    """Sender and receiver ends bound to one simulated system.

    Both ends run on the single logical timeline: ``send`` performs the
    sender's whole turn, ``receive`` the receiver's.  ``log`` records the
    handshake as (clock, actor, event, message number).
    """

    def __init__(self, system, sender, receiver, cfg):
        self.system = system
        self.sender = sender
        self.receiver = receiver
        self.cfg = cfg
        self.frame = build_frame(system, cfg.frame_files, max_bits=cfg.max_bits)
        self.windows = system.regime is Regime.WINDOWS
        self.seq = 0
        self.log = []
        self._sent_pages = []  # pages set by the previous message (windows)
        self.helpers = []
        for fid in cfg.frame_files:
            system.map_file(sender, fid)
            system.map_file(receiver, fid)
        if self.windows:
            self._setup_windows()
        else:
            if cfg.level_bits != 1:
                raise ChannelError("multi-level encoding needs the working-set regime")
            self.bundle = survey_cache(system, sender, cfg.filler_files,
                                       set3_fraction=cfg.set3_fraction)
            if not self.bundle.set2:
                raise ChannelError("no uncached filler pages to evict with")
            system.access_page(receiver, self.frame.ack_pages[0])  # receiver is ready

    # -- setup --------------------------------------------------------------

    @property
    def symbols_per_message(self):
        return self.frame.width_bits

    @property
    def bits_per_message(self):
        return self.frame.width_bits * self.cfg.level_bits

    def _setup_windows(self):
        s = self.system
        fr = self.frame
        need = len(fr.all_pages()) + 16
        s.set_process_working_set_size(self.receiver, self.receiver, need, need + 16)
        s.set_process_working_set_size(self.sender, self.sender, need, need + 16)
        for pg in fr.ready_pages + fr.bit_pages:
            s.lock_page(self.receiver, pg)
        for pg in fr.ack_pages:
            s.lock_page(self.sender, pg)
        levels = (1 << self.cfg.level_bits) - 1
        if levels + 1 > SHARE_COUNT_CAP:
            raise ChannelError("not enough share-count levels")
        me = s.process(self.sender)
        for j in range(1, levels):
            hid = f"{self.sender}+{j}"
            if hid not in s.processes:
                s.add_process(hid, integrity=me.integrity, user=me.user)
            for fid in self.cfg.frame_files:
                s.map_file(hid, fid)
            s.set_process_working_set_size(hid, hid, need, need + 16)
            self.helpers.append(hid)
        # receiver is ready for message 0
        s.access_page(self.receiver, fr.ack_pages[1])

    # -- polling ------------------------------------------------------------

    def _present(self, who, page):
        """One probe of a control page from ``who``'s side."""
        s = self.system
        if self.windows:
            rec = query_working_set(s, who, who, [page])[0]
            if rec.share_count is None:
                raise PermissionDenied("share count not exposed", "share_count_omitted")
            return rec.share_count >= 2
        return mincore(s, who, page.file, page.index, 1)[0]

    def _wait(self, who, page, what):
        s = self.system
        for _ in range(self.cfg.max_polls):
            s.run_due(s.clock)
            if self._present(who, page):
                return
        raise ChannelTimeout(f"{who} gave up waiting for {what} after {self.cfg.max_polls} polls")

    # -- sender -------------------------------------------------------------

    def _clear_linux(self):
        s, fr = self.system, self.frame
        ready_prev = fr.ready_pages[(self.seq + 1) % 2]
        candidates = list(fr.bit_pages) + [fr.ack_pages[0], ready_prev]
        present = mincore_pages(s, self.sender, candidates)
        targets = [pg for pg, b in zip(candidates, present) if b]
        if targets:
            rep = evict_pages_linux(s, self.sender, targets, self.bundle)
            if not rep.succeeded:
                raise ChannelError(f"could not evict {len(targets)} frame pages")

    def _clear_windows(self):
        s, fr = self.system, self.frame
        with s.flat_cost(s.costs.windows_evict_ns):
            for who, pages in self._sent_pages:
                for pg in pages:
                    virtual_unlock(s, who, pg)
        self._sent_pages = []

    def send(self, symbols):
        """Sender turn for one message of symbols (bits, or 0..3 with
        ``level_bits`` 2)."""
        s, fr = self.system, self.frame
        if len(symbols) > fr.width_bits:
            raise ChannelError(f"message of {len(symbols)} symbols exceeds frame width {fr.width_bits}")
        k = self.seq
        if self.windows:
            self._wait(self.sender, fr.ack_pages[(k + 1) % 2], "ACK")
        else:
            self._wait(self.sender, fr.ack_pages[0], "ACK")
        self.log.append((s.clock, "sender", "ack_seen", k))
        if self.windows:
            self._clear_windows()
        else:
            self._clear_linux()
        s.run_due(s.clock)
        writers = [self.sender] + self.helpers
        touched = {w: [] for w in writers}
        again = not self.windows
        for pg, v in zip(fr.bit_pages, symbols):
            for w in writers[:v]:
                s.access_page(w, pg)
                if again:
                    # the second touch activates the page, so the readahead
                    # churn of the rest of the message cannot evict it
                    s.access_page(w, pg)
                touched[w].append(pg)
        ready = fr.ready_pages[k % 2]
        s.access_page(self.sender, ready)
        touched[self.sender].append(ready)
        if self.windows:
            self._sent_pages = list(touched.items())
        self.log.append((s.clock, "sender", "ready", k))

    # -- receiver -----------------------------------------------------------

    def receive(self, n=None):
        s, fr = self.system, self.frame
        k = self.seq
        n = fr.width_bits if n is None else n
        self._wait(self.receiver, fr.ready_pages[k % 2], "READY")
        s.run_due(s.clock)
        self.log.append((s.clock, "receiver", "read", k))
        pages = list(fr.bit_pages[:n])
        if self.windows:
            recs = query_working_set(s, self.receiver, self.receiver, pages)
            top = (1 << self.cfg.level_bits) - 1
            out = []
            for r in recs:
                if r.share_count is None:
                    raise PermissionDenied("share count not exposed", "share_count_omitted")
                out.append(min(top, max(0, r.share_count - 1)))
            old_ack, new_ack = fr.ack_pages[(k + 1) % 2], fr.ack_pages[k % 2]
            s.access_page(self.receiver, new_ack)
            virtual_unlock(s, self.receiver, old_ack)
        else:
            out = [int(b) for b in mincore_pages(s, self.receiver, pages)]
            s.access_page(self.receiver, fr.ack_pages[0])
        self.log.append((s.clock, "receiver", "ack", k))
        self.seq += 1
        return out

    # -- noise --------------------------------------------------------------

    def schedule_noise(self, until_ns, *, proc="noise", seed=None):
        """Poisson background accesses to random pages of the frame files,
        skipping the control windows (a real sender picks quiet pages for
        those).  Returns the number of events scheduled."""
        rate = self.cfg.noise_rate_per_s
        if rate <= 0:
            return 0
        s = self.system
        if proc not in s.processes:
            s.add_process(proc)
        rng = s.rng(f"noise:{proc}" if seed is None else f"noise:{proc}:{seed}")
        stride = self.frame.stride
        quiet = {(pg.file, pg.index // stride) for pg in self.frame.control_pages}
        files = [(fid, s.file(fid).num_pages) for fid in self.cfg.frame_files]
        t = s.clock
        n = 0
        while True:
            t += int(rng.expovariate(rate) * 1e9) + 1
            if t > until_ns:
                return n
            fid, size = files[rng.randrange(len(files))]
            idx = rng.randrange(size)
            if (fid, idx // stride) in quiet:
                continue
            s.schedule(t, _NoiseTouch(proc, PageId(fid, idx), self.cfg.noise_hold_ns,
                                      self.cfg.noise_touches))
            n += 1


@dataclass
class _NoiseTouch:
    proc: str
    page: PageId
    hold_ns: int
    touches: int = 1

    def __call__(self, system):
        if self.page.file not in system.process(self.proc).mappings:
            system.map_file(self.proc, self.page.file)
        for _ in range(self.touches):
            system.access_page(self.proc, self.page)
        if system.regime is Regime.WINDOWS:
            system.schedule(system.clock + self.hold_ns, _NoiseRelease(self.proc, self.page))


@dataclass
class _NoiseRelease:
    proc: str
    page: PageId

    def __call__(self, system):
        system.unlock_or_drop(self.proc, self.page)


def _to_symbols(bits, level_bits):
    if level_bits == 1:
        return list(bits)
    padded = list(bits) + [0] * (-len(bits) % level_bits)
    return [padded[i] << 1 | padded[i + 1] for i in range(0, len(padded), 2)]


def _from_symbols(symbols, level_bits, n_bits):
    if level_bits == 1:
        return list(symbols)[:n_bits]
    out = []
    for v in symbols:
        out.extend(((v >> 1) & 1, v & 1))
    return out[:n_bits]


@dataclass
class SessionResult:
    stats: TransmissionStats
    received: list
    log: list = field(repr=False)


def run_duplex_session(system, sender, receiver, payload, cfg, *, channel=None):
    """Send ``payload`` (a bit sequence) across the channel message by message.

    Throughput comes from the logical clock between the first ACK check and
    the last receiver ACK.
    """
    payload = [int(b) for b in payload]
    for b in payload:
        if b not in (0, 1):
            raise ValueError("payload must be bits")
    ch = channel or LocalChannel(system, sender, receiver, cfg)
    start = system.clock
    if not payload:
        return SessionResult(TransmissionStats(), [], ch.log)
    per_msg = ch.bits_per_message
    n_msgs = math.ceil(len(payload) / per_msg)
    if cfg.noise_rate_per_s > 0:
        per_msg_ns = system.costs.windows_evict_ns if ch.windows else system.costs.linux_evict_ns
        ch.schedule_noise(start + (n_msgs + 2) * per_msg_ns * 2)
    received = []
    for chunk in _chunks(payload, per_msg):
        symbols = _to_symbols(chunk, cfg.level_bits)
        ch.send(symbols)
        got = ch.receive(len(symbols))
        received.extend(_from_symbols(got, cfg.level_bits, len(chunk)))
    system.clear_agenda()
    errors = sum(a != b for a, b in zip(payload, received))
    stats = TransmissionStats(len(payload), errors, system.clock - start, n_msgs)
    return SessionResult(stats, received, ch.log)
