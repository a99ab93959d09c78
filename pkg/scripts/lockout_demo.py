"""Two processes re-enter forever while a third waits: with and without the
no-lockout wrapper.

    python scripts/lockout_demo.py --n 4 8 --trials 200 --horizon 1500
"""

import argparse

import numpy as np

from macmutex.adversary import starvation_strategy
from macmutex.channel import Capabilities
from macmutex.protocols import make_protocol
from macmutex.simulator import UNFULFILLED, lockout_report, run


def victim_wait(tr, victim):
    (start, crit), = lockout_report(tr)[victim]
    return None if crit is UNFULFILLED else crit - start


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[4, 8])
    ap.add_argument("--base", nargs="+", default=["id-tournament-dyn", "cis-willard-dyn"])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--horizon", type=int, default=1500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("base\tn\twrapped\tvictim locked out\tvictim wait (mean / max)")
    for base in args.base:
        for n in args.n:
            caps = Capabilities(n=n, cd=True, kn=True)
            strat = starvation_strategy(n)
            for fair in (False, True):
                proto = make_protocol(base, caps, epsilon="1/16", fairness=fair)
                waits, locked = [], 0
                for i in range(args.trials):
                    tr = run(proto, strat, caps, seed=args.seed, trial=i, horizon=args.horizon)
                    w = victim_wait(tr, n - 1)
                    if w is None:
                        locked += 1
                    else:
                        waits.append(w)
                stats = f"{np.mean(waits):.1f} / {max(waits)}" if waits else "-"
                print(f"{base}\t{n}\t{'yes' if fair else 'no'}\t{locked}/{args.trials}\t\t\t{stats}")


if __name__ == "__main__":
    main()
