"""Deterministic protocols without collision detection cannot keep two
processes apart when their schedules are shorter than n/2.

Runs the removal construction on random schedule sets and replays the
surviving set to exhibit two processes in the critical section together.

    python scripts/lower_bound_demo.py --n 8 --sets 200 --trace violation.jsonl
"""

import argparse
import random

from macmutex.adversary import check_fixed_point, lowerbound_construct, random_schedules, replay_violation
from macmutex.protocol import ViolationKind, validate_trace


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--sets", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trace", help="write the first violating execution here")
    args = ap.parse_args()

    written = False
    for n in args.n:
        rng = random.Random(args.seed * 1000 + n)
        sizes, failures = [], 0
        for _ in range(args.sets):
            scheds = random_schedules(n, rng)
            res = lowerbound_construct(scheds, n)
            if not all(check_fixed_point(res, scheds, n).values()):
                failures += 1
                continue
            trace = replay_violation(scheds, res.p_star, n)
            clash = [v for v in validate_trace(trace) if v.kind is ViolationKind.EXCLUSION]
            failures += not clash
            sizes.append(len(res.p_star))
            if clash and args.trace and not written:
                trace.write_jsonl(args.trace)
                written = True
                print(f"trace written to {args.trace}: schedules {' '.join(map(str, scheds))}, "
                      f"P* = {sorted(res.p_star)}, overlap in round {clash[0].round}")
        mean = sum(sizes) / len(sizes) if sizes else float("nan")
        print(f"n={n}: {args.sets} schedule sets, {failures} failures, |P*| mean {mean:.2f} "
              f"min {min(sizes, default=0)}")


if __name__ == "__main__":
    main()
