"""Command-line front end: dataset generation, builds, benchmark runs,
lambda sweeps, and structure comparisons.

Exit codes: 0 success, 1 environment/I-O trouble, 2 usage errors.  CSV is
the canonical output; ``--json`` switches the report commands to JSON.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .bench.datasets import DISTRIBUTIONS, DatasetSpec, gen_dataset, read_dataset, write_dataset
from .bench.runner import BenchResult, build_structure, execute, run, STRUCTURES, stream_hash, _training_for
from .bench.workloads import ACCESS, MIXES, WorkloadSpec, gen_workload
from .construct import BuildConfig, build_index, load_config
from .core import CarmiError
from .index import IndexStats


def _dataset_args(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="dataset file (CARMIDAT format)")


def _workload_args(p: argparse.ArgumentParser, default_mix="read_only"):
    p.add_argument("--workload", default=default_mix, choices=MIXES)
    p.add_argument("--access", default="zipfian", choices=ACCESS)
    p.add_argument("--ops", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sequential-inserts", action="store_true",
                   help="YCSB-style: inserts append beyond the max key")


def _build_args(p: argparse.ArgumentParser):
    p.add_argument("--lambda", dest="lam", type=float, default=1e-7,
                   help="space weight in the construction objective")
    p.add_argument("--config", help="key=value config file (constants + thresholds)")


def _make_config(args) -> BuildConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        cfg.lam = args.lam
        cfg.__post_init__()
        return cfg
    return BuildConfig(lam=args.lam)


def _load_keys(args):
    return read_dataset(args.data)


def cmd_gen(args) -> int:
    spec = DatasetSpec(distribution=args.dist, n=args.n, seed=args.seed)
    keys, values = gen_dataset(spec)
    write_dataset(args.out, keys, values)
    print(f"wrote {len(keys)} records to {args.out}")
    return 0


def _stats_report(st: IndexStats, as_json: bool, out_path=None) -> str:
    if as_json:
        text = json.dumps(st.__dict__, default=float, sort_keys=True)
    else:
        text = f"{IndexStats.CSV_HEADER}\n{st.csv_row()}"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    return text


def _build_from_args(args):
    keys, values = _load_keys(args)
    wspec = WorkloadSpec(mix=args.workload, access=getattr(args, "access", "zipfian"),
                         ops=getattr(args, "ops", 100_000), seed=args.seed)
    config = _make_config(args)
    training = _training_for(keys, wspec, args.seed)
    return build_index(keys, values, training, config)


def cmd_build(args) -> int:
    index, breakdown = _build_from_args(args)
    text = _stats_report(index.stats(), args.json, args.stats_out)
    print(text)
    print(f"# objective={breakdown.objective:.6f} model_time_ns="
          f"{breakdown.time_ns / max(breakdown.m, 1):.2f} "
          f"space_bytes={breakdown.space_bytes:.0f}", file=sys.stderr)
    return 0


def cmd_stats(args) -> int:
    index, _ = _build_from_args(args)
    print(_stats_report(index.stats(), args.json))
    return 0


def _emit_rows(path, header: str, rows: list[str]):
    if path:
        fresh = not os.path.exists(path) or os.path.getsize(path) == 0
        with open(path, "a") as fh:
            if fresh:
                fh.write(header + "\n")
            for row in rows:
                fh.write(row + "\n")


def cmd_run(args) -> int:
    dspec = DatasetSpec(distribution="file", path=args.data, n=1)
    wspec = WorkloadSpec(mix=args.workload, access=args.access, ops=args.ops,
                         seed=args.seed,
                         sequential_inserts=args.sequential_inserts)
    result = run(dspec, wspec, args.structure, lam=args.lam,
                 config=_make_config(args) if args.config else None)
    if args.json:
        print(json.dumps(result.__dict__, default=float, sort_keys=True))
    else:
        print(BenchResult.CSV_HEADER)
        print(result.csv_row())
    _emit_rows(args.out, BenchResult.CSV_HEADER, [result.csv_row()])
    return 0


SWEEP_HEADER = "lambda,model_avg_query_ns,measured_avg_ns,space_bytes,depth"


def cmd_sweep(args) -> int:
    lams = [float(tok) for tok in args.lambda_list.split(",") if tok.strip()]
    if not lams:
        raise CarmiError("empty lambda list")
    keys, values = _load_keys(args)
    wspec = WorkloadSpec(mix=args.workload, access=args.access, ops=args.ops,
                         seed=args.seed)
    workload = gen_workload(wspec, keys, values)
    training = _training_for(workload.build_keys, wspec, args.seed)
    rows = []
    print(SWEEP_HEADER)
    for lam in lams:
        config = _make_config(args)
        config.lam = lam
        config.__post_init__()
        index, breakdown = build_index(workload.build_keys, workload.build_values,
                                       training, config)
        elapsed_ns, _ = execute(index, workload)
        row = (f"{lam:g},{breakdown.time_ns / max(breakdown.m, 1):.4f},"
               f"{elapsed_ns / wspec.ops:.1f},{breakdown.space_bytes:.0f},"
               f"{index.stats().depth}")
        rows.append(row)
        print(row)
    _emit_rows(args.out, SWEEP_HEADER, rows)
    return 0


def cmd_compare(args) -> int:
    if args.against not in ("btree", "rmi", "alex", "carmi"):
        raise CarmiError(f"unknown structure {args.against!r}")
    dspec = DatasetSpec(distribution="file", path=args.data, n=1)
    wspec = WorkloadSpec(mix=args.workload, access=args.access, ops=args.ops,
                         seed=args.seed,
                         sequential_inserts=args.sequential_inserts)
    ours = run(dspec, wspec, "carmi", lam=args.lam)
    theirs = run(dspec, wspec, args.against, lam=args.lam)
    speedup = theirs.avg_ns_per_query / ours.avg_ns_per_query
    space_ratio = ours.space_bytes / theirs.space_bytes
    if args.json:
        print(json.dumps({
            "against": args.against,
            "carmi_avg_ns": ours.avg_ns_per_query,
            "other_avg_ns": theirs.avg_ns_per_query,
            "speedup": speedup,
            "carmi_space": ours.space_bytes,
            "other_space": theirs.space_bytes,
            "space_ratio": space_ratio,
            "stream_hash": ours.stream_hash,
        }, sort_keys=True))
    else:
        print("structure,avg_ns_per_query,space_bytes,stream_hash")
        print(f"carmi,{ours.avg_ns_per_query:.1f},{ours.space_bytes:.0f},{ours.stream_hash}")
        print(f"{args.against},{theirs.avg_ns_per_query:.1f},{theirs.space_bytes:.0f},"
              f"{theirs.stream_hash}")
        print(f"speedup,{speedup:.3f}")
        print(f"space_ratio,{space_ratio:.3f}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carmi", description="cache-aware learned index toolkit")
    parser.add_argument("--json", action="store_true", help="JSON output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset file")
    p.add_argument("--dist", required=True, choices=[d for d in DISTRIBUTIONS if d != "file"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build", help="build an index and report its statistics")
    _dataset_args(p)
    p.add_argument("--workload", default="read_only", choices=MIXES)
    p.add_argument("--seed", type=int, default=0)
    _build_args(p)
    p.add_argument("--stats-out", help="also write the stats report here")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="build with defaults and print index stats")
    _dataset_args(p)
    p.add_argument("--workload", default="read_only", choices=MIXES)
    p.add_argument("--seed", type=int, default=0)
    _build_args(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("run", help="benchmark one structure on one workload")
    _dataset_args(p)
    _workload_args(p)
    _build_args(p)
    p.add_argument("--structure", required=True, choices=STRUCTURES)
    p.add_argument("--out", help="append the result row to this CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="trace the lambda time/space frontier")
    _dataset_args(p)
    _workload_args(p)
    p.add_argument("--lambda-list", required=True,
                   help="comma-separated lambda values")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--lam", type=float, default=1e-7, help=argparse.SUPPRESS)
    p.add_argument("--out", help="append frontier rows to this CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="run carmi and a baseline on one stream")
    _dataset_args(p)
    _workload_args(p)
    _build_args(p)
    p.add_argument("--against", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CarmiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
