"""Scenario runners: one function per experiment kind.

Each returns an :class:`ExperimentResult` with a summary mapping (all rates
derived from the logical clock) and the CSV tables to write.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from .attacks import (
    EventTemplate, Monitor, StrcmpVictim, bench_eviction, keystroke_monitor, length_oracle_attack,
)
from .cache import PageId, Regime
from .config import build_system
from .covert_local import LocalChannelConfig, TransmissionStats, run_duplex_session
from .covert_remote import RemoteChannelConfig, TimingSample, profile, run_remote_session
from .eviction import EvictionReport, survey_cache

CSV_VERSION = 1


@dataclass
class Table:
    schema: str
    fields: tuple
    rows: list

    def render(self):
        buf = io.StringIO()
        buf.write(f"# pagecache-lab {self.schema} v{CSV_VERSION}\n")
        w = csv.DictWriter(buf, fieldnames=list(self.fields), lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r)
        return buf.getvalue()


@dataclass
class ExperimentResult:
    scenario: str
    kind: str
    summary: dict
    tables: dict = field(default_factory=dict)  # file suffix -> Table
    systems: list = field(default_factory=list, repr=False)

    def write(self, out_dir, fmt="csv"):
        if fmt != "csv":
            raise ValueError(f"unsupported format {fmt!r}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        summary = Table("summary", ("key", "value"),
                        [{"key": k, "value": v} for k, v in self.summary.items()])
        for suffix, table in [("summary", summary), *self.tables.items()]:
            p = out / f"{self.scenario}-{suffix}.csv"
            p.write_text(table.render())
            written.append(p)
        return written

    def check_invariants(self):
        for s in self.systems:
            s.check_invariants()


def _bits(n, seed):
    rng = random.Random(f"payload:{seed}")
    return [rng.randrange(2) for _ in range(n)]


def run_covert_local(sc):
    p = sc.params
    s = build_system(sc)
    cfg = LocalChannelConfig(tuple(p.frame_files), tuple(p.filler_files),
                             set3_fraction=p.set3_fraction, max_bits=p.max_bits,
                             level_bits=p.level_bits, noise_rate_per_s=p.noise_rate_per_s)
    res = run_duplex_session(s, p.sender, p.receiver, _bits(p.bits, p.payload_seed), cfg)
    st = res.stats
    summary = {
        "experiment": sc.experiment, "regime": sc.regime, "bits": st.bits_sent,
        "bit_errors": st.bit_errors, "ber": f"{st.ber:.8f}", "messages": st.messages,
        "elapsed_ns": st.elapsed_ns, "throughput_kib_per_s": f"{st.throughput_kib_per_s:.4f}",
    }
    table = Table("covert-stats", TransmissionStats.CSV_FIELDS, [st.row()])
    return ExperimentResult(sc.name, sc.experiment, summary, {"stats": table}, [s])


def run_covert_remote(sc):
    p = sc.params
    prof = profile(p.profile)
    s = build_system(sc)
    cfg = RemoteChannelConfig(p.data_file, p.control_file,
                              threshold_ms=p.threshold_ms if p.threshold_ms is not None else prof.threshold_ms)
    model = replace(prof.model, seed=sc.seed)
    res = run_remote_session(_bits(p.bits, p.payload_seed), prof, seed=sc.seed, model=model,
                             system=s, cfg=cfg, sender=p.sender, server=p.server)
    st = res.stats
    hits = [x.latency_ms for x in res.samples if x.truth == "hit"]
    misses = [x.latency_ms for x in res.samples if x.truth == "miss"]
    summary = {
        "experiment": sc.experiment, "profile": p.profile, "bits": st.bits_sent,
        "bit_errors": st.bit_errors, "ber": f"{st.ber:.8f}", "threshold_ms": cfg.threshold_ms,
        "hit_mean_ms": f"{sum(hits) / len(hits):.4f}" if hits else "",
        "miss_mean_ms": f"{sum(misses) / len(misses):.4f}" if misses else "",
        "elapsed_ns": st.elapsed_ns, "bits_per_s": f"{res.bits_per_s:.4f}",
    }
    table = Table("remote-bits", TimingSample.CSV_FIELDS, [x.row() for x in res.samples])
    return ExperimentResult(sc.name, sc.experiment, summary, {"bits": table}, [s])


def _monitor_setup(sc):
    p = sc.params
    s = build_system(sc)
    target = PageId(p.target.file, p.target.index)
    s.map_file(p.victim, target.file)
    bundle = None
    if s.regime is Regime.LINUX:
        bundle = survey_cache(s, p.attacker, p.eviction_files, targets=[target],
                              set3_fraction=p.set3_fraction, seed=sc.seed)
    return s, target, bundle


def run_keystrokes(sc):
    p = sc.params
    s, target, bundle = _monitor_setup(sc)
    if p.key_times_s is not None:
        times = [int(t * 1e9) for t in p.key_times_s]
    else:
        n = int(round(p.keys_per_s * p.duration_s))
        times = [int(1e9 + k * 1e9 / p.keys_per_s) for k in range(n)]
    tmpl = EventTemplate(target, "keypress", 1.0)
    start = s.clock
    mon = Monitor(s, p.attacker, target, victim=p.victim, bundle=bundle, max_rearm=p.max_rearm)
    trace = keystroke_monitor(s, p.attacker, tmpl, times, victim=p.victim, monitor=mon)
    tp, fp, fn = trace.score(2 * mon.probe_cost)
    lat = _latencies(trace)
    elapsed = s.clock - start
    summary = {
        "experiment": sc.experiment, "regime": sc.regime, "keypresses": len(times),
        "detections": len(trace.detected_events), "true_positives": tp,
        "false_positives": fp, "missed": fn, "probes": trace.probe_count,
        "mean_latency_ns": f"{sum(lat) / len(lat):.1f}" if lat else "",
        "max_latency_ns": max(lat) if lat else "",
        "elapsed_ns": elapsed,
        "probes_per_s": f"{trace.probe_count / (elapsed / 1e9):.1f}" if elapsed else "",
    }
    tables = {"trace": Table("keystroke-trace", KEYSTROKE_FIELDS, trace.rows())}
    if p.idle_s > 0:
        idle = keystroke_monitor(s, p.attacker, tmpl, [], victim=p.victim, monitor=mon,
                                 until_ns=s.clock + int(p.idle_s * 1e9))
        summary["idle_s"] = p.idle_s
        summary["idle_false_positives"] = len(idle.detected_events)
    return ExperimentResult(sc.name, sc.experiment, summary, tables, [s])


KEYSTROKE_FIELDS = ("time", "value")


def _latencies(trace):
    """Detection minus the latest keypress at or before it."""
    out = []
    keys = sorted(trace.keypresses)
    j = 0
    for d in trace.detected_events:
        while j + 1 < len(keys) and keys[j + 1] <= d:
            j += 1
        if keys and keys[j] <= d:
            out.append(d - keys[j])
    return out


def run_eviction_bench(sc):
    p = sc.params
    s, target, bundle = _monitor_setup(sc)
    res = bench_eviction(s, p.attacker, target, victim=p.victim, bundle=bundle,
                         period_ns=int(p.period_s * 1e9), events=p.events)
    summary = {"experiment": sc.experiment, "regime": sc.regime, **res.summary()}
    rows = [r.row() for r in res.reports if r.rounds]
    return ExperimentResult(sc.name, sc.experiment, summary,
                            {"evictions": Table("eviction-report", EvictionReport.CSV_FIELDS, rows)}, [s])


ORACLE_FIELDS = ("secret_id", "length", "recovered", "queries", "bound")


def run_oracle(sc):
    p = sc.params
    secrets = list(p.secrets or [])
    rng = random.Random(f"secrets:{sc.seed if p.secret_seed is None else p.secret_seed}")
    for _ in range(p.random_secrets):
        n = rng.randint(1, p.max_len)
        secrets.append("".join(rng.choice(p.alphabet) for _ in range(n)))
    rows, ok, worst, within, elapsed, queries = [], 0, 0, 0, 0, 0
    systems = []
    for k, secret in enumerate(secrets):
        s = build_system(sc.with_seed(sc.seed + k))
        victim = StrcmpVictim(p.victim, secret, p.exchange_file)
        if s.regime is Regime.WINDOWS:
            s.map_file(p.victim, p.exchange_file)
        out = length_oracle_attack(s, p.attacker, victim, p.alphabet, p.max_len)
        good = out.prefix == secret[:p.max_len]
        ok += good
        worst = max(worst, out.queries)
        queries += out.queries
        elapsed += s.clock
        bound = len(secret) * len(p.alphabet)
        within += out.queries <= bound
        rows.append({"secret_id": k, "length": len(secret), "recovered": int(good),
                     "queries": out.queries, "bound": bound})
        if k < 4:
            systems.append(s)
    summary = {"experiment": sc.experiment, "regime": sc.regime, "secrets": len(secrets),
               "recovered": ok, "max_queries": worst, "within_bound": within,
               "elapsed_ns": elapsed,
               "queries_per_s": f"{queries / (elapsed / 1e9):.1f}" if elapsed else ""}
    return ExperimentResult(sc.name, sc.experiment, summary,
                            {"secrets": Table("oracle-secrets", ORACLE_FIELDS, rows)}, systems)


RUNNERS = {
    "covert-local": run_covert_local,
    "covert-remote": run_covert_remote,
    "keystrokes": run_keystrokes,
    "oracle": run_oracle,
    "eviction-bench": run_eviction_bench,
}


def run_scenario(sc):
    return RUNNERS[sc.experiment](sc)
