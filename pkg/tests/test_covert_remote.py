import math
import random
import statistics
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from pagecache_lab import (
    ChannelError, LatencyModel, PageId, ReadaheadConfig, RemoteChannelConfig, System, remote_fetch,
    run_remote_session,
)
from pagecache_lab.covert_remote import (
    PROFILES, RemoteProfile, control_fraction, decode, profile, receiver_decode_bit, remote_system,
    sender_encode_bit, sender_wait,
)
from pagecache_lab.errors import ChannelTimeout
from pagecache_lab.probe import posix_fadvise_dontneed

HDD = PROFILES["hdd"].model


def _small(pages=25, model=HDD):
    s = System("linux_global", 4096)
    s.add_file("doc", pages)
    s.add_process("httpd")
    s.add_process("sender")
    return s, replace(model, noise_sigma_ms=0.0)


def test_hdd_anchor_cached():
    s, m = _small()
    s.read_file("httpd", "doc")
    lat = remote_fetch(s, "httpd", "doc", m, m.rng())
    # 7.5 ms base plus 25 cached pages at 36 us each
    assert lat == pytest.approx(7.5 + 25 * 0.036)
    assert lat == pytest.approx(8.4)


def test_hdd_anchor_uncached():
    s, m = _small()
    lat = remote_fetch(s, "httpd", "doc", m, m.rng())
    assert lat == pytest.approx(7.5 + 6.7)
    assert lat == pytest.approx(14.2)


def test_fetch_caches_the_file():
    s, m = _small()
    remote_fetch(s, "httpd", "doc", m, m.rng())
    assert s.resident_count("doc") == 25


def test_bare_model_is_base_rtt():
    m = LatencyModel(base_rtt_ms=3.25, per_disk_batch_ms=0.0)
    assert m.expected_ms(0, 100) == 3.25
    assert m.sample(40, 60, m.rng()) == 3.25


@pytest.mark.parametrize("field", ["base_rtt_ms", "per_disk_batch_ms", "per_cached_page_us",
                                   "noise_sigma_ms"])
def test_model_rejects_negative(field):
    kw = dict(base_rtt_ms=1.0, per_disk_batch_ms=1.0)
    kw[field] = -1.0
    with pytest.raises(ValueError):
        LatencyModel(**kw)


def test_model_rejects_empty_batch():
    with pytest.raises(ValueError):
        LatencyModel(1.0, 1.0, batch_pages=0)


@pytest.mark.parametrize("frac", [0.0, 1.5])
def test_config_rejects_bad_fraction(frac):
    with pytest.raises(ValueError):
        RemoteChannelConfig(control_ready_fraction=frac)


@given(st.sampled_from(sorted(PROFILES)), st.integers(0, 8000), st.integers(0, 8000),
       st.integers(1, 500))
def test_latency_monotone_in_missed_pages(name, cached, missed, extra):
    m = PROFILES[name].model
    assert m.expected_ms(cached, missed + extra) >= m.expected_ms(cached, missed)


@given(st.floats(0, 1000, allow_nan=False), st.floats(0.1, 1000))
def test_decode_is_threshold(lat, thr):
    assert decode(lat, thr) == (1 if lat < thr else 0)


def test_unknown_profile():
    with pytest.raises(ChannelError):
        profile("floppy")


@pytest.mark.parametrize("name", ["hdd", "ssd"])
def test_zero_noise_gives_zero_ber(name):
    m = replace(PROFILES[name].model, noise_sigma_ms=0.0)
    rng = random.Random(3)
    bits = [rng.randrange(2) for _ in range(60)]
    r = run_remote_session(bits, name, model=m)
    assert r.stats.bit_errors == 0
    assert [x.decoded for x in r.samples] == bits


def test_samples_carry_truth():
    r = run_remote_session([1, 0, 1], "hdd", seed=2)
    assert [x.truth for x in r.samples] == ["hit", "miss", "hit"]
    assert [x.seq for x in r.samples] == [0, 1, 2]
    assert set(r.samples[0].row()) == {"seq", "truth", "latency_ms", "decoded"}


def test_encode_bit_one_caches_data_file():
    s, cfg = remote_system(PROFILES["hdd"])
    s.read_file("httpd", cfg.control_file)
    sender_encode_bit(s, "sender", 1, cfg)
    assert s.resident_count(cfg.data_file) == s.file(cfg.data_file).num_pages
    assert s.resident_count(cfg.control_file) == 0
    sender_encode_bit(s, "sender", 0, cfg)
    assert s.resident_count(cfg.data_file) == 0


def test_encode_refuses_mapped_file():
    s, cfg = remote_system(PROFILES["hdd"])
    s.add_process("other")
    s.map_file("other", cfg.data_file)
    with pytest.raises(ChannelError):
        sender_encode_bit(s, "sender", 1, cfg)


def _partial_control(cached):
    prof = RemoteProfile(HDD, data_pages=64, control_pages=100, threshold_ms=105.0)
    s, cfg = remote_system(prof)
    s.readahead = ReadaheadConfig(enabled=False)
    with s.mapped("httpd", cfg.control_file):
        for i in range(cached):
            s.access_page("httpd", PageId(cfg.control_file, i))
    cfg = replace(cfg, max_polls=50)
    return s, cfg


def test_sender_waits_at_79_percent():
    s, cfg = _partial_control(79)
    assert control_fraction(s, "sender", cfg) == pytest.approx(0.79)
    with pytest.raises(ChannelTimeout):
        sender_wait(s, "sender", cfg)


def test_sender_proceeds_at_80_percent():
    s, cfg = _partial_control(80)
    assert sender_wait(s, "sender", cfg) == 1


def test_receiver_decode_fetches_both_files():
    s, cfg = remote_system(PROFILES["hdd"])
    m = replace(HDD, noise_sigma_ms=0.0)
    sender_encode_bit(s, "sender", 1, cfg)
    bit, lat, ctl = receiver_decode_bit(s, "httpd", m, cfg, m.rng())
    assert bit == 1 and lat < cfg.threshold_ms
    assert ctl == pytest.approx(14.2)
    assert s.resident_count(cfg.control_file) == 25


def test_ssd_miss_above_threshold():
    prof = PROFILES["ssd"]
    s, cfg = remote_system(prof)
    m = replace(prof.model, noise_sigma_ms=0.0)
    sender_encode_bit(s, "sender", 0, cfg)
    bit, lat, _ = receiver_decode_bit(s, "httpd", m, cfg, m.rng())
    assert bit == 0 and lat > 300


def test_hdd_separation_three_sigma():
    prof = PROFILES["hdd"]
    s, cfg = remote_system(prof)
    rng = prof.model.rng("separation")
    hits, misses = [], []
    for _ in range(1000):
        posix_fadvise_dontneed(s, "sender", cfg.data_file)
        misses.append(remote_fetch(s, "httpd", cfg.data_file, prof.model, rng))
        hits.append(remote_fetch(s, "httpd", cfg.data_file, prof.model, rng))
    thr = prof.threshold_ms
    assert statistics.mean(hits) + 3 * statistics.stdev(hits) < thr
    assert thr < statistics.mean(misses) - 3 * statistics.stdev(misses)


def test_skipping_step_one_ruins_the_channel():
    bits = [1, 0] * 100
    good = run_remote_session(bits, "hdd", seed=1)
    bad = run_remote_session(bits, "hdd", seed=1, skip_evict=True)
    assert good.stats.ber < 0.05
    assert 0.45 <= bad.stats.ber <= 0.55


def test_bit_rate_from_logical_clock():
    r = run_remote_session([1, 0] * 20, "hdd", seed=0)
    assert r.stats.elapsed_ns > 0
    assert r.bits_per_s == pytest.approx(40 / (r.stats.elapsed_ns / 1e9))
    assert math.isfinite(r.bits_per_s)
