"""Command-line entry point.

Subcommands:
  run     execute a scenario to completion and write metrics/audit/trace
  serve   run the simulation with the HTTP gateway attached
  bench   planner benchmark suite (optionally the kernel benchmark too)
  verify  acceptance scenarios with one pass/fail line per criterion

Exit codes: 0 ok, 1 validation error, 2 runtime error, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import bundled_scenario
from .scenario import ScenarioError, load_scenario


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    try:
        return bundled_scenario(path.stem)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {arg}")


def cmd_run(args) -> int:
    from .engine import SimRun

    cfg = load_scenario(_resolve_scenario(args.scenario))
    if args.duration is not None:
        cfg.duration = args.duration
        cfg.validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.jsonl" if args.trace else None
    sim = SimRun(cfg, seed=args.seed, trace_path=trace_path)
    report = sim.run()
    (out / "metrics.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    (out / "audit.jsonl").write_text(sim.control.audit_jsonl(), encoding="utf-8")
    print(f"metrics -> {out / 'metrics.json'}")
    print(f"audit   -> {out / 'audit.jsonl'}")
    if trace_path:
        print(f"trace   -> {trace_path}")
    return 0


def cmd_serve(args) -> int:
    from .api import serve
    from .engine import SimRun

    cfg = load_scenario(_resolve_scenario(args.scenario))
    if args.duration is not None:
        cfg.duration = args.duration
        cfg.validate()
    trace_path = Path(args.out) / "trace.jsonl" if args.trace else None
    if trace_path:
        trace_path.parent.mkdir(parents=True, exist_ok=True)
    sim = SimRun(cfg, seed=args.seed, trace_path=trace_path)
    print(f"serving on http://127.0.0.1:{args.port} (pace={args.pace}x)")
    serve(sim, port=args.port, pace=args.pace)
    return 0


def cmd_bench(args) -> int:
    from .bench import run_planner_bench, run_kernel_bench

    results = run_planner_bench(instances_dir=args.instances)
    print(json.dumps(results, indent=2))
    if args.kernels:
        print(json.dumps(run_kernel_bench(), indent=2))
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.json").write_text(json.dumps(results, indent=2) + "\n",
                                        encoding="utf-8")
    return 0


def cmd_verify(args) -> int:
    from . import acceptance

    results = acceptance.run_suite(args.suite)
    failures = sum(1 for r in results if not r.passed)
    for r in results:
        print(r.line())
        if r.detail and (args.verbose or not r.passed):
            print(f"    {r.detail}")
    print(f"\n{len(results) - failures}/{len(results)} criteria passed")
    return 3 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skysim",
                                     description="low-altitude airspace simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario to completion")
    p_run.add_argument("--scenario", required=True,
                       help="scenario JSON path or bundled name (case2)")
    p_run.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_run.add_argument("--duration", type=float, default=None, help="override duration, s")
    p_run.add_argument("--out", default="out", help="output directory (default: out/)")
    p_run.add_argument("--trace", action="store_true", help="write per-tick trace JSONL")
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="run sim + HTTP gateway")
    p_serve.add_argument("--scenario", required=True)
    p_serve.add_argument("--seed", type=int, default=None)
    p_serve.add_argument("--duration", type=float, default=None)
    p_serve.add_argument("--port", type=int, default=8008)
    p_serve.add_argument("--pace", type=float, default=1.0,
                         help="sim seconds per wall second; 0 = as fast as possible")
    p_serve.add_argument("--out", default="out")
    p_serve.add_argument("--trace", action="store_true")
    p_serve.set_defaults(func=cmd_serve)

    p_bench = sub.add_parser("bench", help="planner benchmark suite")
    p_bench.add_argument("--instances", default=None,
                         help="directory of benchmark scenario files (default: bundled bench/)")
    p_bench.add_argument("--kernels", action="store_true",
                         help="also compare numba vs numpy kernel timings")
    p_bench.add_argument("--out", default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_verify = sub.add_parser("verify", help="run acceptance criteria")
    p_verify.add_argument("--suite", default="all",
                          choices=["all", "sensing", "fusion", "planning", "control"])
    p_verify.add_argument("--verbose", action="store_true")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
