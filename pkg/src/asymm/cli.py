"""Command line interface.

Subcommands:
  run     execute a configured experiment and export artifacts
  replay  re-run a stored trace through the centralized solver and diff it
  verify  run the protocol and quadratic-bound property suites
  grid    export classifier outputs over a grid from a finished run

Exit codes: 0 success, 2 bad configuration, 3 property violation,
4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, build_run
from .errors import ConfigError, NumericAbort, PropertyViolation
from .metrics import export_classifier_grid
from .protocol_checks import exhaustive_path3, liveness_corpus, soundness_corpus
from .reference import verify_descent_monotonicity, verify_gradient_bound, verify_replay
from .runner import run_experiment
from .trace_io import read_binary, read_jsonl

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROPERTY = 3
EXIT_NUMERIC = 4


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    overrides = dict(cfg.raw)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "events", None) is not None:
        overrides.setdefault("stop", {})
        overrides["stop"] = {**overrides.get("stop", {}), "max_events": args.events}
    if getattr(args, "block_mode", None) is not None:
        overrides["block"] = {**overrides.get("block", {}),
                              "enabled": args.block_mode == "on"}
    if getattr(args, "out_dir", None) is not None:
        overrides["out_dir"] = str(args.out_dir)
    return RunConfig.from_dict(overrides)


def _read_trace(path):
    path = Path(path)
    if path.suffix == ".bin":
        return read_binary(path)
    return read_jsonl(path)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out_dir = args.out_dir or cfg.out_dir
    if out_dir is None:
        raise ConfigError("no output directory: pass --out-dir or set out_dir")
    summary = run_experiment(cfg, out_dir)
    print(f"events={summary['n_events']} cycles={summary['n_cycles']} "
          f"final_xi={summary['final_xi']} spread={summary['consensus_spread']:.3e}")
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _load_config(args)
    setup = build_run(cfg)
    trace = _read_trace(args.trace)
    report = verify_replay(trace, setup.problems, setup.net)
    print(f"cycles={report['n_cycles']} max_deviation={report['max_deviation']:.3e} "
          f"branch_mismatches={report['branch_mismatches']}")
    ok = report["max_deviation"] <= args.tol and report["branch_mismatches"] == 0
    if not ok:
        print("replay FAILED: centralized solver disagrees with the trace",
              file=sys.stderr)
        return EXIT_PROPERTY
    print("replay OK")
    return EXIT_OK


def cmd_verify(args) -> int:
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        failures += 0 if ok else 1
        print(f"[{'PASS' if ok else 'FAIL'}] {name}{': ' + detail if detail else ''}")

    suites = args.suite
    if suites in ("all", "logic-and"):
        for pad in (0, 2):
            tag = f" (+{pad} rows)" if pad else ""
            s = soundness_corpus(n_graphs=args.graphs, seed=args.seed, pad=pad)
            report(f"logic-AND soundness{tag}", not s["violations"],
                   f"{s['runs']} runs, {s['detections']} detections")
            l = liveness_corpus(n_graphs=args.graphs, seed=args.seed, pad=pad)
            report(f"logic-AND liveness{tag}", not l["violations"],
                   f"{l['runs']} runs")
            e = exhaustive_path3(max_len=args.exhaustive_len, pad=pad)
            report(f"logic-AND exhaustive 3-path{tag}", not e["violations"],
                   f"{e['prefixes']} prefixes")
    if suites in ("all", "quadratic"):
        rng = np.random.default_rng(args.seed)
        bound_bad = mono_bad = 0
        for _ in range(50):
            n = int(rng.integers(2, 11))
            a = rng.normal(size=(n, n))
            q = a @ a.T + 0.5 * np.eye(n)
            b = rng.normal(size=n)
            blocks = int(rng.integers(1, n + 1))
            eps = rng.uniform(1e-4, 1e-2, size=blocks)
            r = verify_gradient_bound(q, b, blocks, eps, y0=rng.normal(size=n))
            bound_bad += len(r["violations"])
            r2 = verify_descent_monotonicity(q, b, rng.normal(size=n))
            mono_bad += len(r2["violations"])
        report("tolerance-to-gradient bound (50 quadratics)", bound_bad == 0)
        report("descent distance monotonicity (50 quadratics)", mono_bad == 0)
    if failures:
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_grid(args) -> int:
    summary = json.loads(Path(args.summary).read_text())
    if "consensus_mean" not in summary or len(summary["consensus_mean"]) != 25:
        raise ConfigError("summary does not come from a classifier run")
    weights = np.array(summary["consensus_mean"], dtype=float)
    export_classifier_grid(weights, tuple(args.bounds), args.resolution, args.out)
    print(f"wrote {args.resolution}x{args.resolution} grid to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asymm",
                                     description="asynchronous method of multipliers")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--events", type=int)
    p_run.add_argument("--out-dir")
    p_run.add_argument("--block-mode", choices=("on", "off"))
    p_run.set_defaults(func=cmd_run)

    p_replay = sub.add_parser("replay", help="check a trace against the oracle")
    p_replay.add_argument("--config", required=True)
    p_replay.add_argument("--trace", required=True)
    p_replay.add_argument("--seed", type=int)
    p_replay.add_argument("--tol", type=float, default=1e-12)
    p_replay.set_defaults(func=cmd_replay)

    p_verify = sub.add_parser("verify", help="run the property suites")
    p_verify.add_argument("--suite", choices=("all", "logic-and", "quadratic"),
                          default="all")
    p_verify.add_argument("--graphs", type=int, default=100)
    p_verify.add_argument("--exhaustive-len", type=int, default=12)
    p_verify.add_argument("--seed", type=int, default=2024)
    p_verify.set_defaults(func=cmd_verify)

    p_grid = sub.add_parser("grid", help="export classifier outputs over a grid")
    p_grid.add_argument("--summary", required=True)
    p_grid.add_argument("--out", required=True)
    p_grid.add_argument("--bounds", type=float, nargs=4,
                        default=(-2.0, 3.0, -1.5, 2.0),
                        metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p_grid.add_argument("--resolution", type=int, default=100)
    p_grid.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PropertyViolation as exc:
        window = f" (window {exc.window})" if exc.window else ""
        print(f"property violation: {exc}{window}", file=sys.stderr)
        return EXIT_PROPERTY
    except NumericAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
