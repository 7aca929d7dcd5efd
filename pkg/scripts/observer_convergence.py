"""Write the estimation error of each attacker over time for the reference scenario.

Output CSV columns: t, then one error column per observer.
"""
import argparse

import numpy as np

from cpl.observers import ExternalObserver, InternalObserver, IslandObserver, observe
from cpl.reference import reference_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=float, default=30.0)
    ap.add_argument("--out", default="observer_errors.csv")
    ap.add_argument("--every", type=int, default=100, help="keep every k-th sample")
    args = ap.parse_args()
    s = reference_scenario(horizon=args.horizon)
    obs = [InternalObserver(1, 4), InternalObserver(1, 5),
           ExternalObserver(2, intercepted=frozenset({2, 3})), IslandObserver(1, frozenset({1, 2, 3}))]
    tr, runs = observe(s, obs)
    cols = np.column_stack([tr.times] + [r.error for r in runs])[::args.every]
    np.savetxt(args.out, cols, delimiter=",", header=",".join(["t"] + [r.name for r in runs]), comments="")
    for r in runs:
        tail = np.abs(r.error[int(0.9 * len(r.error)):]).max()
        print(f"{r.name:20s} final estimate {r.final:+.5f} (true {r.truth:+.1f}), max |error| over last 10% {tail:.1e}")


if __name__ == "__main__":
    main()
