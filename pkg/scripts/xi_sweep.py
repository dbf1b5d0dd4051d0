"""Train one controller per usage-price vector and report how the share of
calls to the strongest agent moves with its price.

    python3 scripts/xi_sweep.py --grid "0,0,0;0.25,0.125,0;0.5,0.125,0"
"""

import argparse
from pathlib import Path

import numpy as np

from critrouter.experiments import run_seed
from critrouter.plots import usage_curves


def parse_grid(text):
    return [tuple(float(x) for x in part.split(",")) for part in text.split(";") if part.strip()]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--grid", default="0,0,0;0.25,0.125,0;0.5,0.125,0")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--plot", type=Path, default=None, help="SVG of per-agent usage during training")
    args = ap.parse_args()

    series = {}
    print(f"{'xi':<22} {'accuracy':>9} {'strongest':>10}  shares")
    for xi in parse_grid(args.grid):
        runs = [run_seed(s, xi, n_eval=args.n) for s in args.seeds]
        acc = np.mean([r.result.accuracy for r in runs])
        share = np.mean([r.result.strongest_share for r in runs])
        shares = np.mean([r.result.usage.shares for r in runs], axis=0)
        print(f"{str(xi):<22} {acc:>9.4f} {share:>10.4f}  {np.round(shares, 3).tolist()}")
        series[f"xi={','.join(f'{x:g}' for x in xi)}"] = runs[0].records
    if args.plot:
        usage_curves(series, 3, args.plot)


if __name__ == "__main__":
    main()
