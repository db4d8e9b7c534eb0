"""Command line entry point: ``cfisac run | sweep | oracle-compare``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .exceptions import InvalidConfigError
from .harness import (METHOD_NAMES, OK, SweepSpec, aggregate, emit_results, run_sweep,
                      run_trial)
from .scenario import NetworkConfig

log = logging.getLogger("cfisac")


def _summary(record) -> dict:
    doc = record.to_dict()
    for key in ("w_hat", "filters", "config", "wall_ms"):
        doc.pop(key)
    return doc


def cmd_run(args) -> int:
    config = NetworkConfig.from_json(args.config)
    seed = config.seed if args.seed is None else args.seed
    record = run_trial(config, args.method, seed)
    print(json.dumps(_summary(record), indent=1))
    if args.out:
        emit_results([record], args.out, args.format, timing=args.timing)
    return 0


def cmd_sweep(args) -> int:
    spec = SweepSpec.from_json(args.spec)
    records, table = run_sweep(spec, workers=args.workers)
    for row in table:
        mean_db = "n/a" if row["mean_db"] is None else f"{row['mean_db']:8.3f} dB"
        print(f"{row['method']:>10s} {row['axis']}={row['value']!s:>6s}  "
              f"ok {row['ok']:3d}/{row['trials']:<3d} mean {mean_db}")
    emit_results(records, args.out, args.format, table=table, timing=args.timing)
    return 0


def cmd_oracle_compare(args) -> int:
    config = NetworkConfig.from_json(args.config)
    methods = ("cc", "sc", "joint", "random", "exhaustive")
    records = []
    print("seed  " + "  ".join(f"{m:>10s}" for m in methods) + "  oracle-mode")
    for t in range(args.trials):
        seed = args.seed0 + t
        row = {m: run_trial(config, m, seed) for m in methods}
        records.extend(row.values())
        cells = ["{:>10s}".format(f"{r.objective_db:.3f}" if r.status == OK else r.status)
                 for r in row.values()]
        print(f"{seed:4d}  " + "  ".join(cells) + f"  {row['exhaustive'].mode_bits}")
    oracle = {r.seed: r for r in records if r.method == "exhaustive" and r.status == OK}
    for m in methods[:-1]:
        hits = [r.mode_bits == oracle[r.seed].mode_bits for r in records
                if r.method == m and r.status == OK and r.seed in oracle]
        gaps = [oracle[r.seed].objective_db - r.objective_db for r in records
                if r.method == m and r.status == OK and r.seed in oracle]
        if hits:
            print(f"{m:>10s}: oracle mode in {sum(hits)}/{len(hits)} trials, "
                  f"mean gap {np.mean(gaps):.3f} dB")
    if args.out:
        emit_results(records, args.out, args.format, table=aggregate(records),
                     timing=args.timing)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfisac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def outputs(p, required=False):
        p.add_argument("--out", required=required, help="output directory")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
        p.add_argument("--timing", action="store_true",
                       help="fill the CSV wall_ms column (output no longer reproducible)")

    p = sub.add_parser("run", help="one trial of one method")
    p.add_argument("--config", required=True)
    p.add_argument("--method", required=True, choices=METHOD_NAMES)
    p.add_argument("--seed", type=int, default=None)
    outputs(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Monte Carlo sweep from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--workers", type=int, default=1)
    outputs(p, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-compare", help="heuristics against exhaustive search")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed0", type=int, default=0)
    outputs(p)
    p.set_defaults(func=cmd_oracle_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"cfisac: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
