"""Evaluate one trained controller under several turn budgets T.

    python3 scripts/turn_budget.py --turns 1 2 3 4 --plot sweep.svg
"""

import argparse
from pathlib import Path

from critrouter.experiments import eval_seed, run_seed
from critrouter.plots import sweep_plot


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--turns", type=int, nargs="+", default=[1, 2, 3, 4])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--plot", type=Path, default=None)
    args = ap.parse_args()

    run = run_seed(args.seed, sweep_turns=args.turns, n_eval=args.n)
    print(f"trained seed {args.seed}, evaluation seed {eval_seed(args.seed)}")
    print(f"{'T':>2} {'accuracy':>9} {'exhausted':>10} {'strongest':>10}")
    for row in run.sweep:
        print(f"{row.horizon:>2} {row.accuracy:>9.4f} {row.exhaustion_fraction:>10.4f} {row.strongest_share:>10.4f}")
    if args.plot:
        sweep_plot(run.sweep, args.plot)


if __name__ == "__main__":
    main()
