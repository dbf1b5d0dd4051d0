"""Monte Carlo check that the tree estimator recovers (G-1)/G of the exact
policy gradient on a small pool.

    python3 scripts/bias_check.py --groups 2 4 --samples 200000
"""

import argparse

import numpy as np

from critrouter.trainer import estimator_bias_check, random_params, tiny_env


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--groups", type=int, nargs="+", default=[2, 4])
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--param-seed", type=int, default=19)
    ap.add_argument("--floor", type=float, default=1e-3)
    args = ap.parse_args()

    env = tiny_env(2)
    params = random_params(env, np.random.default_rng(args.param_seed), 1.0, bins=2, horizon=2)
    for G in args.groups:
        res = estimator_bias_check(env, params, G, args.samples, seed=G)
        mask = res.mask(args.floor)
        r = res.ratio(floor=args.floor)
        print(
            f"G={G}  target {(G - 1) / G:.4f}  ratio [{r.min():.4f}, {r.max():.4f}]  "
            f"max rel err {res.max_relative_error(False, args.floor):.3%} raw, {res.max_relative_error(True, args.floor):.3%} corrected  "
            f"({int(mask.sum())} coords above {args.floor:g})"
        )


if __name__ == "__main__":
    main()
