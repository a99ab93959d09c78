"""Makespan and overlap rate of pi-mod as n grows (eps fixed).

    python scripts/scaling_pi_mod.py --n 4 8 16 32 --epsilon 1/16 --trials 500 --out pi_scaling.csv
"""

import argparse
import csv
import math
from fractions import Fraction

from macmutex.harness import ExperimentConfig, run_experiment
from macmutex.protocol import ceil_log2


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--epsilon", default="1/16")
    ap.add_argument("--pattern", default="suite")
    ap.add_argument("--trials", type=int, default=300)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", help="CSV output (one row per n, pooled over patterns)")
    args = ap.parse_args()

    cfg = ExperimentConfig(protocol="pi-mod", n=args.n, epsilon=args.epsilon, pattern=args.pattern,
                           trials=args.trials, seed=args.seed)
    report = run_experiment(cfg)
    eps_bits = ceil_log2(1 / Fraction(args.epsilon))
    rows = []
    for n in args.n:
        part = [r for r in report.rows if r.n == n]
        visits = sum(r.visits for r in part)
        rows.append({
            "n": n,
            "log2n": ceil_log2(n),
            "makespan_mean": sum(r.makespan_mean * r.admissible for r in part) / sum(r.admissible for r in part),
            "makespan_max": max(r.makespan_max for r in part),
            "max_over_logn_log1eps": max(r.makespan_max for r in part) / (max(1, ceil_log2(n)) * eps_bits),
            "overlap_rate": sum(r.violated_visits for r in part) / visits if visits else math.nan,
        })
    print(f"pi-mod, eps={args.epsilon}, {args.trials} trials per (n, pattern)")
    print("n\tlog2n\tmean\tmax\tmax/(logn log1/eps)\toverlap")
    for r in rows:
        print(f"{r['n']}\t{r['log2n']}\t{r['makespan_mean']:.1f}\t{r['makespan_max']:.0f}\t"
              f"{r['max_over_logn_log1eps']:.2f}\t\t\t{r['overlap_rate']:.4f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
