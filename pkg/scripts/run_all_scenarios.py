#!/usr/bin/env python3
"""Run every bundled scenario through the CLI and write the CSVs under one
directory.  Exit status is the worst one seen."""

import argparse
import sys
import time

from pagecache_lab.cli import main as cli_main
from pagecache_lab.config import bundled_scenarios


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--skip", nargs="*", default=[], help="scenario names to leave out")
    args = ap.parse_args()
    worst = 0
    for name in bundled_scenarios():
        if name in args.skip:
            continue
        argv = ["run", name, "--out", args.out]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        print(f"== {name}", flush=True)
        t = time.perf_counter()
        rc = cli_main(argv)
        print(f"exit {rc} in {time.perf_counter() - t:.1f}s", flush=True)
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(main())
