import random

import pytest
from hypothesis import given, settings, strategies as st

from pagecache_lab import (
    ChannelError, LocalChannel, LocalChannelConfig, PermissionDenied, ProbePolicy, Regime, System,
    TransmissionStats, build_frame, frame_capacity, mincore, run_duplex_session,
)

FRAME = tuple(f"fr{i}" for i in range(4))
FILL = ("fill0", "fill1")


def lsys(seed=0, **kw):
    s = System(Regime.LINUX, 2048, seed=seed, **kw)
    s.add_process("tx")
    s.add_process("rx")
    for f in FRAME:
        s.add_file(f, 832)  # 26 windows
    for f in FILL:
        s.add_file(f, 4096)
    return s, LocalChannelConfig(FRAME, FILL, max_bits=100)


def wsys(seed=0, level_bits=1, **kw):
    s = System(Regime.WINDOWS, 4096, seed=seed, **kw)
    s.add_process("tx")
    s.add_process("rx")
    for f in FRAME:
        s.add_file(f, 832)
    return s, LocalChannelConfig(FRAME, max_bits=100, level_bits=level_bits)


SYSTEMS = {"linux": lsys, "windows": wsys}


@pytest.mark.parametrize("nbytes,bits", [(13_107_200, 100), (419_430_400, 3200), (4096 * 32, 1),
                                         (4096 * 32 - 1, 0), (0, 0)])
def test_frame_capacity(nbytes, bits):
    assert frame_capacity(nbytes) == bits


def test_frame_layout_linux():
    s, cfg = lsys()
    fr = build_frame(s, cfg.frame_files, max_bits=100)
    assert len(fr.ready_pages) == 2 and len(fr.ack_pages) == 1
    assert fr.width_bits == 100
    fr.check()


def test_frame_layout_windows():
    s, cfg = wsys()
    fr = build_frame(s, cfg.frame_files)
    assert len(fr.ack_pages) == 2
    assert fr.width_bits == 4 * 26 - 4


def test_frame_needs_room():
    s = System(Regime.LINUX, 64)
    s.add_file("tiny", 64)
    with pytest.raises(ChannelError):
        build_frame(s, ["tiny"])


def test_stats_reject_more_errors_than_bits():
    with pytest.raises(ValueError):
        TransmissionStats(bits_sent=3, bit_errors=4)


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(sorted(SYSTEMS)), st.lists(st.integers(0, 1), min_size=1, max_size=100))
def test_round_trip_identity(regime, bits):
    s, cfg = SYSTEMS[regime]()
    r = run_duplex_session(s, "tx", "rx", bits, cfg)
    assert r.received == bits
    assert r.stats.bit_errors == 0


@settings(max_examples=8, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=200))
def test_round_trip_two_level_windows(bits):
    s, cfg = wsys(level_bits=2)
    assert run_duplex_session(s, "tx", "rx", bits, cfg).received == bits


@pytest.mark.parametrize("regime", sorted(SYSTEMS))
def test_alternating_payload_resident_pattern(regime):
    s, cfg = SYSTEMS[regime]()
    ch = LocalChannel(s, "tx", "rx", cfg)
    bits = [1, 0] * 50
    ch.send(bits)
    fr = ch.frame
    if regime == "linux":
        seen = [int(s.is_resident(p)) for p in fr.bit_pages]
    else:
        seen = [int(p in s.process("tx").working_set) for p in fr.bit_pages]
    assert seen == bits
    assert sum(seen) == 50
    assert ch.receive() == bits


def test_all_zero_payload_touches_only_ready():
    s, cfg = lsys()
    ch = LocalChannel(s, "tx", "rx", cfg)
    ch.send([0] * 100)
    fr = ch.frame
    assert not any(s.is_resident(p) for p in fr.bit_pages)
    assert s.is_resident(fr.ready_pages[0])
    assert ch.receive() == [0] * 100


def test_zero_length_payload():
    s, cfg = lsys()
    r = run_duplex_session(s, "tx", "rx", [], cfg)
    assert r.stats.bits_sent == 0 and r.stats.bit_errors == 0 and r.received == []


def test_ready_pages_alternate():
    s, cfg = lsys()
    ch = LocalChannel(s, "tx", "rx", cfg)
    r0, r1 = ch.frame.ready_pages
    ch.send([1] * 10)
    assert s.is_resident(r0) and not s.is_resident(r1)
    ch.receive(10)
    ch.send([1] * 10)
    assert s.is_resident(r1) and not s.is_resident(r0)
    assert ch.receive(10) == [1] * 10


@pytest.mark.parametrize("regime", sorted(SYSTEMS))
def test_handshake_order(regime):
    s, cfg = SYSTEMS[regime]()
    rng = random.Random(4)
    payload = [rng.randrange(2) for _ in range(450)]
    r = run_duplex_session(s, "tx", "rx", payload, cfg)
    expected = []
    for k in range(r.stats.messages):
        expected += [("sender", "ack_seen", k), ("sender", "ready", k),
                     ("receiver", "read", k), ("receiver", "ack", k)]
    assert [e[1:] for e in r.log] == expected
    clocks = [e[0] for e in r.log]
    assert clocks == sorted(clocks)


def test_receiver_times_out_without_ready():
    s, cfg = lsys()
    cfg.max_polls = 5
    ch = LocalChannel(s, "tx", "rx", cfg)
    with pytest.raises(ChannelError):
        ch.receive()


@pytest.mark.parametrize("regime", sorted(SYSTEMS))
def test_sandbox_neutrality(regime):
    rng = random.Random(9)
    payload = [rng.randrange(2) for _ in range(300)]
    a, cfg = SYSTEMS[regime]()
    ra = run_duplex_session(a, "tx", "rx", payload, cfg)
    b, cfg = SYSTEMS[regime]()
    for p in ("tx", "rx"):
        b.process(p).capabilities = frozenset()
    rb = run_duplex_session(b, "tx", "rx", payload, cfg)
    assert rb.received == ra.received == payload
    assert rb.stats == ra.stats
    assert a.fingerprint() == b.fingerprint()


def test_windows_channel_needs_only_own_queries():
    s, cfg = wsys(policy=ProbePolicy(qws_requires_full_info=True))
    payload = [1, 0, 0, 1] * 40
    assert run_duplex_session(s, "tx", "rx", payload, cfg).received == payload


def test_windows_channel_fails_without_share_count():
    s, cfg = wsys(policy=ProbePolicy(share_count_omitted=True))
    with pytest.raises(PermissionDenied):
        run_duplex_session(s, "tx", "rx", [1, 0, 1], cfg)


def test_linux_channel_fails_without_mincore():
    s, cfg = lsys(policy=ProbePolicy(mincore_privileged=True))
    with pytest.raises(PermissionDenied):
        run_duplex_session(s, "tx", "rx", [1, 0, 1], cfg)


def test_multi_level_needs_windows():
    s, cfg = lsys()
    cfg.level_bits = 2
    with pytest.raises(ChannelError):
        LocalChannel(s, "tx", "rx", cfg)


@pytest.mark.parametrize("regime", sorted(SYSTEMS))
def test_background_access_flips_a_bit(regime):
    s, cfg = SYSTEMS[regime]()
    s.add_process("noise")
    ch = LocalChannel(s, "tx", "rx", cfg)
    ch.send([0] * 100)
    for f in FRAME:
        s.map_file("noise", f)
    s.access_page("noise", ch.frame.bit_pages[37])
    got = ch.receive()
    assert got == [0] * 37 + [1] + [0] * 62


def test_noise_process_causes_errors_only_when_enabled():
    rng = random.Random(2)
    payload = [rng.randrange(2) for _ in range(2000)]
    s, cfg = lsys()
    quiet = run_duplex_session(s, "tx", "rx", payload, cfg)
    s, cfg = lsys()
    cfg.noise_rate_per_s = 2000.0
    noisy = run_duplex_session(s, "tx", "rx", payload, cfg)
    assert quiet.stats.bit_errors == 0
    assert noisy.stats.bit_errors > 0


def test_frame_probe_does_not_disturb():
    s, cfg = lsys()
    ch = LocalChannel(s, "tx", "rx", cfg)
    ch.send([1] * 100)
    before = s.fingerprint()
    mincore(s, "rx", FRAME[0])
    assert s.fingerprint() == before
