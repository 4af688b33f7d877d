"""Command line entry point ``ttn-apply``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .apply import METHODS, ApplyMethod, apply
from .tensor import TruncationConfig
from .tree import TTNO, TTNS, from_json, to_json

EXIT_FAILED_CELL = 2


def _int_list(values) -> list:
    out = []
    for v in values:
        out.extend(int(x) for x in str(v).split(",") if x.strip())
    return out


def _str_list(values) -> list:
    out = []
    for v in values:
        out.extend(x.strip() for x in str(v).split(",") if x.strip())
    return out


def _common_bench_args(p: argparse.ArgumentParser):
    p.add_argument("--Dbar", nargs="+", required=True, help="target bond dimensions (space or comma separated)")
    p.add_argument("--methods", nargs="+", default=list(METHODS))
    p.add_argument("--seeds", nargs="+", default=["0"])
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; a JSON mirror is written next to it")
    p.add_argument("--serial-timing", action="store_true", help="run cells one at a time for clean timings")
    p.add_argument("--oversampling", type=int, default=0, help="extra sketch columns for src")
    p.add_argument("--fudge", type=float, default=1.0, help="intermediate bond slack for zipup")
    p.add_argument(
        "--max-entries", type=int, default=bench.DEFAULT_MAX_ENTRIES,
        help="out-of-memory guard: largest tensor and working set, in complex entries",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttn-apply", description="Apply tree tensor network operators to states.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a benchmark sweep")
    bsub = b.add_subparsers(dest="experiment", required=True)

    r = bsub.add_parser("random", help="random operators on random states")
    r.add_argument("--structure", nargs="+", default=["mps"])
    r.add_argument("--L", type=int, required=True)
    r.add_argument("--d", type=int, default=3)
    r.add_argument("--Ds", type=int, required=True)
    r.add_argument("--Do", type=int, required=True)
    r.add_argument("--reference", choices=bench.REFERENCES, default="auto")
    _common_bench_args(r)

    c = bsub.add_parser("circuit", help="U U-dagger circuit simulation")
    c.add_argument("--structure", nargs="+", default=["t3ns-leaves"])
    c.add_argument("--qubits", type=int, default=27)
    c.add_argument("--batches", type=int, default=3)
    _common_bench_args(c)

    a = sub.add_parser("apply", help="apply one operator file to one state file")
    a.add_argument("--op", required=True)
    a.add_argument("--state", required=True)
    a.add_argument("--method", choices=METHODS, default="cbc")
    a.add_argument("--Dbar", type=int, required=True)
    a.add_argument("--tol", type=float, default=0.0)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--oversampling", type=int, default=0)
    a.add_argument("--fudge", type=float, default=1.0)
    a.add_argument("--out", required=True)

    sub.add_parser("selftest", help="check every method against the dense oracle")
    return parser


def _cmd_bench(args) -> int:
    structures = _str_list(args.structure)
    common = dict(
        dbars=_int_list(args.Dbar),
        methods=_str_list(args.methods),
        seeds=_int_list(args.seeds),
        out=args.out,
        master_seed=args.master_seed,
        oversampling=args.oversampling,
        fudge=args.fudge,
        max_entries=args.max_entries,
        serial_timing=args.serial_timing,
    )
    if args.experiment == "random":
        plan = bench.BenchPlan(
            "random", structures, L=args.L, d=args.d, D_S=args.Ds, D_O=args.Do, reference=args.reference, **common
        )
    else:
        plan = bench.BenchPlan("circuit", structures, L=args.qubits, d=2, n_batches=args.batches, **common)
    records = bench.run_plan(plan)
    failed = [r for r in records if not r.ok]
    for r in records:
        print(f"{r.structure:16s} {r.method:7s} Dbar={r.Dbar:<4d} seed={r.seed:<3d} "
              f"err={r.rel_error:.3e} time={r.wall_time_seconds:.3f}s peak={r.peak_entries} {r.status}")
    print(f"wrote {args.out} and {bench.json_path_for(args.out)}")
    return EXIT_FAILED_CELL if failed else 0


def _cmd_apply(args) -> int:
    op = from_json(json.loads(Path(args.op).read_text()))
    state = from_json(json.loads(Path(args.state).read_text()))
    if not isinstance(op, TTNO) or not isinstance(state, TTNS):
        print("--op must hold a ttno and --state a ttns", file=sys.stderr)
        return 1
    method = ApplyMethod(args.method, oversampling=args.oversampling, fudge=args.fudge)
    rep = apply(method, op, state, TruncationConfig(args.Dbar, args.tol), rng=np.random.default_rng(args.seed))
    Path(args.out).write_text(json.dumps(to_json(rep.result)))
    print(f"{args.method}: max bond {rep.result.max_bond_dim()}, "
          f"time {rep.wall_time:.3f}s, peak entries {rep.peak_entry_count}")
    return 0


def _cmd_selftest() -> int:
    cases = bench.selftest()
    for c in cases:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.method:7s} {c.structure:16s} rel_error={c.rel_error:.2e}")
    return 0 if all(c.passed for c in cases) else EXIT_FAILED_CELL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "apply":
            return _cmd_apply(args)
        return _cmd_selftest()
    except (ValueError, OSError) as exc:
        print(f"ttn-apply: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
