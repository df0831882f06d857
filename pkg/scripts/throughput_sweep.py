#!/usr/bin/env python3
"""Local covert channel throughput against frame width, both regimes.

Prints one CSV row per (regime, width).  Widths beyond what the frame files
hold are clipped by the frame builder.
"""

import argparse
import csv
import random
import sys

from pagecache_lab import LocalChannelConfig, Regime, System, run_duplex_session


def system_for(regime, frame_files, frame_pages, fillers, filler_pages, capacity):
    s = System(regime, capacity, seed=0)
    s.add_process("tx")
    s.add_process("rx")
    for f in frame_files:
        s.add_file(f, frame_pages)
    if regime is Regime.LINUX:
        for f in fillers:
            s.add_file(f, filler_pages)
    return s


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bits", type=int, default=20_000)
    ap.add_argument("--widths", type=int, nargs="+", default=[100, 400, 1600, 3200, 6400])
    ap.add_argument("--capacity", type=int, default=32768)
    args = ap.parse_args()
    frames = tuple(f"frame{i}" for i in range(8))
    fillers = tuple(f"filler{i}" for i in range(3))
    payload = [random.Random(1).randrange(2) for _ in range(args.bits)]
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["regime", "width_bits", "messages", "bit_errors", "kib_per_s"])
    for regime in Regime:
        for w in args.widths:
            s = system_for(regime, frames, 32768, fillers, 16384, args.capacity * (2 if regime is Regime.WINDOWS else 1))
            cfg = LocalChannelConfig(frames, fillers if regime is Regime.LINUX else (), max_bits=w)
            st = run_duplex_session(s, "tx", "rx", payload, cfg).stats
            out.writerow([regime.value, w, st.messages, st.bit_errors, f"{st.throughput_kib_per_s:.3f}"])
            sys.stdout.flush()


if __name__ == "__main__":
    main()
