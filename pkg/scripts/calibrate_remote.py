#!/usr/bin/env python3
"""Show how the remote latency profiles sit against their anchors.

For each profile: the 25-page hit/miss means, the large data file's hit/miss
distribution, the margin to the decoding threshold in standard deviations,
and the bit error rate of a short session.
"""

import argparse
import random
import statistics

from pagecache_lab import System, remote_fetch, run_remote_session
from pagecache_lab.covert_remote import PROFILES
from pagecache_lab.probe import posix_fadvise_dontneed


def sample(prof, pages, n, seed):
    s = System("linux_global", max(4096, 2 * pages))
    s.add_file("doc", pages)
    s.add_process("httpd")
    s.add_process("sender")
    rng = prof.model.rng(f"calibrate:{seed}")
    hits, misses = [], []
    for _ in range(n):
        posix_fadvise_dontneed(s, "sender", "doc")
        misses.append(remote_fetch(s, "httpd", "doc", prof.model, rng))
        hits.append(remote_fetch(s, "httpd", "doc", prof.model, rng))
    return hits, misses


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--bits", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    for name, prof in PROFILES.items():
        h, m = sample(prof, prof.control_pages, args.samples, args.seed)
        print(f"{name}: {prof.control_pages}-page file hit {statistics.mean(h):.2f} ms, "
              f"miss {statistics.mean(m):.2f} ms")
        h, m = sample(prof, prof.data_pages, args.samples, args.seed)
        thr = prof.threshold_ms
        hm, hs, mm, ms = statistics.mean(h), statistics.stdev(h), statistics.mean(m), statistics.stdev(m)
        print(f"  {prof.data_pages}-page file hit {hm:.2f}±{hs:.2f} ms, miss {mm:.2f}±{ms:.2f} ms, "
              f"threshold {thr} ms ({(thr - hm) / hs:.1f} / {(mm - thr) / ms:.1f} sigma)")
        rng = random.Random(args.seed)
        bits = [rng.randrange(2) for _ in range(args.bits)]
        r = run_remote_session(bits, name, seed=args.seed)
        print(f"  {args.bits}-bit session BER {r.stats.ber:.4%}, {r.bits_per_s:.2f} bit/s")


if __name__ == "__main__":
    main()
