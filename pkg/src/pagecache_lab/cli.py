"""Command-line front end.

    pagecache-lab run covert-local-linux --out results/
    pagecache-lab run --config my.yaml --seed 7
    pagecache-lab bench-eviction
    pagecache-lab list-scenarios
    pagecache-lab validate --config my.yaml

Exit status: 0 ok, 1 invariant violation, 2 config error, 3 the experiment
itself failed (for example a probe denied by a hardened policy).
"""

import argparse
import logging
import sys

from .config import bundled_scenarios, load_bundled, resolve_scenario
from .errors import ConfigError, InvariantViolation, LabError
from .experiments import run_scenario

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2, 3

log = logging.getLogger("pagecache_lab")


def _parser():
    ap = argparse.ArgumentParser(prog="pagecache-lab", description="Page-cache side-channel lab.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, scenario=True):
        if scenario:
            p.add_argument("scenario", nargs="?", help="bundled scenario name")
        p.add_argument("--config", metavar="PATH", help="scenario YAML file")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
        p.add_argument("--format", choices=["csv"], default="csv")

    common(sub.add_parser("run", help="run a scenario and write its CSVs"))
    common(sub.add_parser("bench-eviction", help="periodic-event eviction bench"))
    sub.add_parser("list-scenarios", help="list bundled scenarios")
    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("scenario", nargs="?")
    v.add_argument("--config", metavar="PATH")
    return ap


def _load(args, default=None):
    ref = args.config or args.scenario or default
    if ref is None:
        raise ConfigError("give a bundled scenario name or --config PATH")
    sc = resolve_scenario(ref)
    if getattr(args, "seed", None) is not None:
        sc = sc.with_seed(args.seed)
    return sc


def _run(sc, args):
    log.info("running %s (%s, seed %d)", sc.name, sc.experiment, sc.seed)
    result = run_scenario(sc)
    result.check_invariants()
    paths = result.write(args.out, args.format)
    for k, v in result.summary.items():
        print(f"{k}={v}")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "list-scenarios":
            for name in bundled_scenarios():
                sc = load_bundled(name)
                print(f"{name}\t{sc.experiment}\t{sc.regime}\t{sc.description}")
            return EXIT_OK
        if args.command == "validate":
            sc = _load(args)
            print(f"ok: {sc.name} ({sc.experiment}, {sc.regime})")
            return EXIT_OK
        if args.command == "bench-eviction":
            sc = _load(args, default="eviction-bench")
            if sc.experiment != "eviction-bench":
                raise ConfigError(f"scenario {sc.name!r} is a {sc.experiment} experiment",
                                  field="experiment")
            return _run(sc, args)
        return _run(_load(args), args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except LabError as e:
        print(f"experiment failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
