"""Time to the first critical entry for cis-willard with everybody starting at once.

Small n goes through the round simulator, every n through the vectorised
engine; both columns should agree where they overlap.

    python scripts/scaling_cis_willard.py --n 4 16 256 65536 --epsilon 1/16
"""

import argparse

import numpy as np

from macmutex.adversary import AdversaryStrategy
from macmutex.batch import election_first_gap
from macmutex.channel import Capabilities
from macmutex.protocols import CISConfig, make_protocol
from macmutex.simulator import run


def simulated(n: int, epsilon: str, trials: int, seed: int) -> np.ndarray:
    caps = Capabilities(n=n, cd=True, kn=False)
    proto = make_protocol("cis-willard", caps, epsilon=epsilon)
    strat = AdversaryStrategy.static(n)
    gaps = []
    for i in range(trials):
        tr = run(proto, strat, caps, seed=seed, trial=i, stop_after_entries=1)
        gaps.append(next(t for t, row in enumerate(tr.sections) if 2 in row))
    return np.array(gaps)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[4, 16, 256, 4096, 65536])
    ap.add_argument("--epsilon", default="1/16")
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--sim-limit", type=int, default=256, help="largest n run round by round")
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    check = 2 * CISConfig(args.epsilon).pairs
    print(f"cis-willard, eps={args.epsilon}: check takes {check} rounds")
    print("n\tbatch median\tbatch mean\tsim median\tsim mean\telection rounds (mean)")
    for n in args.n:
        fast = election_first_gap(n, args.epsilon, args.trials, seed=args.seed)
        sim = ""
        if n <= args.sim_limit:
            s = simulated(n, args.epsilon, min(args.trials, 500), args.seed)
            sim = f"{np.median(s):g}\t\t{s.mean():.2f}"
        else:
            sim = "-\t\t-"
        print(f"{n}\t{fast.median():g}\t\t{fast.gaps.mean():.2f}\t\t{sim}\t\t{(fast.gaps - check).mean():.2f}")


if __name__ == "__main__":
    main()
