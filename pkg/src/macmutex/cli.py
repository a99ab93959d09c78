"""``macsim`` command line: simulate, mc, adversary, validate."""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from typing import Optional, Sequence

from .adversary import (
    ARRIVAL_PATTERNS,
    check_fixed_point,
    load_schedules,
    lowerbound_construct,
    random_schedules,
    replay_violation,
)
from .harness import (
    SUITE,
    ExperimentConfig,
    load_config,
    run_experiment,
    run_trial,
)
from .protocol import ConfigError, ProtocolViolation, ViolationKind, summarize_violations, validate_trace
from .protocols import PROTOCOLS
from .simulator import ExecutionTrace, exclusion_report, makespan

LEGALITY = (ViolationKind.REMAINDER_TRANSMISSION, ViolationKind.MISSING_CRITICAL_MESSAGE,
            ViolationKind.ILLEGAL_TRANSITION)


def _common(p: argparse.ArgumentParser, grid: bool) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--protocol", choices=sorted(PROTOCOLS))
    p.add_argument("--n", type=int, nargs="+" if grid else None,
                   help="process count; also made known to the protocols unless --hide-n")
    p.add_argument("--hide-n", action="store_true", help="run without the KN capability")
    p.add_argument("--epsilon", help='error budget as a fraction (default "1/16")')
    p.add_argument("--cd", action="store_true", default=None, help="collision detection")
    p.add_argument("--gc", action="store_true", default=None, help="global clock")
    p.add_argument("--fairness", action="store_true", default=None, help="wrap in the no-lockout transform")
    p.add_argument("--static", action="store_true", help="every process starts at round 0 (default)")
    p.add_argument("--strategy", help="adversary strategy JSON file")
    pats = sorted(ARRIVAL_PATTERNS) + ["starvation"] + ([SUITE] if grid else [])
    p.add_argument("--pattern", choices=pats, nargs="+" if grid else None)
    p.add_argument("--critical", type=int, help="critical section length for static starts")
    p.add_argument("--cycles", type=int, help="visits per cycling process in the starvation pattern")
    p.add_argument("--seed", type=int, help="root seed (fallback: $MACSIM_SEED, then 0)")
    p.add_argument("--horizon", type=int)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="extra protocol parameter (c_phase, c_phases, id_bits)")


def _config(args: argparse.Namespace) -> ExperimentConfig:
    doc = load_config(args.config) if args.config else {}
    for key in ("protocol", "epsilon", "cd", "gc", "fairness", "strategy", "critical", "cycles",
                "horizon", "trials", "workers", "trace", "report_json", "report_csv", "pattern"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    if args.n is not None:
        doc["n"] = args.n
    if args.hide_n:
        doc["kn"] = False
    if args.static:
        doc["strategy"] = None
        doc["pattern"] = None
    if args.seed is not None:
        doc["seed"] = args.seed
    elif "seed" not in doc and os.environ.get("MACSIM_SEED"):
        try:
            doc["seed"] = int(os.environ["MACSIM_SEED"])
        except ValueError:
            raise ConfigError(f"MACSIM_SEED must be an integer, got {os.environ['MACSIM_SEED']!r}") from None
    params = dict(doc.get("params", {}))
    for item in args.param:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        params[key] = int(val) if val.lstrip("-").isdigit() else val
    doc["params"] = params
    if doc.get("n") is None:
        what = doc.get("protocol", "the simulation")
        raise ConfigError(f"{what} needs the process count: pass --n")
    return ExperimentConfig.from_dict(doc)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    n = cfg.n_values()[0]
    pattern = cfg.patterns()[0]
    result, trace = run_trial(cfg, n, pattern, trial=0)
    if cfg.trace:
        trace.write_jsonl(cfg.trace)
    counts = summarize_violations(validate_trace(trace))
    ms = makespan(trace)
    ex = exclusion_report(trace)
    print(f"protocol: {trace.protocol}  n: {n}  caps: {cfg.caps(n).label()}  "
          f"epsilon: {cfg.epsilon}  seed: {cfg.seed}")
    print(f"rounds: {trace.rounds}  truncated: {str(trace.truncated).lower()}")
    print(f"violations: {json.dumps(counts)}")
    print(f"critical visits: {ex.total}  overlapped: {ex.violated}")
    print(f"makespan: {ms.max_gap}")
    print(f"admissible: {str(ms.admissible).lower()}")
    if cfg.trace:
        print(f"trace: {cfg.trace}")
    return 1 if any(counts[k.value] for k in LEGALITY) else 0


def cmd_mc(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = run_experiment(cfg)
    report.write(cfg.report_json, cfg.report_csv)
    cols = ("n", "pattern", "trials", "violation_rate", "makespan_mean", "makespan_max", "unfulfilled")
    print("\t".join(cols))
    for row in report.rows:
        vals = [getattr(row, c) for c in cols]
        print("\t".join(f"{v:.4g}" if isinstance(v, float) else str(v) for v in vals))
    return 0


def cmd_adversary(args: argparse.Namespace) -> int:
    if args.schedules:
        n, scheds = load_schedules(args.schedules)
    else:
        if args.random is None:
            raise ConfigError("pass --schedules FILE or --random N")
        n = args.random
        scheds = random_schedules(n, random.Random(args.seed or 0))
    result = lowerbound_construct(scheds, n)
    checks = check_fixed_point(result, scheds, n)
    print(f"n: {n}")
    print("schedules: " + " ".join(str(s) for s in scheds))
    print(f"p_star: {sorted(result.p_star)}  (stable after {result.iterations} steps)")
    for name, ok in checks.items():
        print(f"  {name}: {'ok' if ok else 'FAILED'}")
    if not all(checks.values()):
        print("construction post-conditions unmet", file=sys.stderr)
        return 2
    trace = replay_violation(scheds, result.p_star, n)
    overlaps = [v for v in validate_trace(trace) if v.kind is ViolationKind.EXCLUSION]
    if args.trace:
        trace.write_jsonl(args.trace)
        print(f"trace: {args.trace}")
    if overlaps:
        first = overlaps[0]
        print(f"violation: processes {list(first.pids)} share the critical section in round {first.round}")
        return 0
    print("replay produced no exclusion violation", file=sys.stderr)
    return 3


def cmd_validate(args: argparse.Namespace) -> int:
    trace = ExecutionTrace.read_jsonl(args.trace)
    counts = summarize_violations(validate_trace(trace))
    ms = makespan(trace)
    print(f"rounds: {trace.rounds}  processes: {trace.n}  protocol: {trace.protocol}")
    print(f"violations: {json.dumps(counts)}")
    print(f"makespan: {ms.max_gap}  admissible: {str(ms.admissible).lower()}")
    return 1 if any(counts[k.value] for k in LEGALITY) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="macsim", description="Mutual exclusion on a multiple access channel.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one execution and write its trace")
    _common(p, grid=False)
    p.add_argument("--trace", help="JSON-lines output path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc", help="Monte Carlo estimate of makespan and exclusion")
    _common(p, grid=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--report-json", dest="report_json")
    p.add_argument("--report-csv", dest="report_csv")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("adversary", help="lower-bound construction on transmission schedules")
    p.add_argument("--schedules", help='JSON {"n": 4, "schedules": ["011", ...]}')
    p.add_argument("--random", type=int, metavar="N", help="draw random schedules for N processes")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="write the violating execution here")
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("validate", help="check a stored trace")
    p.add_argument("trace")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PermissionError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except ProtocolViolation as err:
        print(f"protocol violation: {err}", file=sys.stderr)
        return 4
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
