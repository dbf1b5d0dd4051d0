"""Accuracy and usage of the trained controller against the baselines,
mean ± std over seeds.  Budgets are off by default.

    python3 scripts/table1_analog.py --seeds 0 1 2 --out runs/table
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from critrouter.baselines import FixedAgentRouter, OracleRouter
from critrouter.env import default_env
from critrouter.evaluation import evaluate
from critrouter.experiments import DESK, eval_seed, run_seed, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--iterations", type=int, default=DESK.iterations)
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--budget", action="store_true", help="enforce the usage budgets at evaluation")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    base = replace(DESK, iterations=args.iterations)
    env = default_env()
    runs = [run_seed(s, env=env, base=base, n_eval=args.n, budgets=args.budget) for s in args.seeds]
    s = summarize(runs)

    extra = {}
    for name, router in [("oracle", OracleRouter()), ("fixed:1", FixedAgentRouter(1)), ("fixed:3", FixedAgentRouter(3))]:
        accs = [evaluate(router, env, args.n, budgets=args.budget, seed=eval_seed(r.seed)).accuracy for r in runs]
        extra[name] = (float(np.mean(accs)), float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0)

    print(f"{'router':<12} {'accuracy':>18}")
    for name in ("controller", "random", "oneshot"):
        m, sd = s[name]
        print(f"{name:<12} {m:>10.4f} ± {sd:.4f}")
    for name, (m, sd) in extra.items():
        print(f"{name:<12} {m:>10.4f} ± {sd:.4f}")
    print(f"controller shares {np.round(s['shares'], 4).tolist()}")
    print(f"strongest share {s['strongest_share'][0]:.4f} ± {s['strongest_share'][1]:.4f}")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        for r in runs:
            (args.out / f"eval_seed{r.seed}.json").write_text(r.result.to_json())
        (args.out / "table.json").write_text(json.dumps({**s, **{k: list(v) for k, v in extra.items()}}, indent=2))


if __name__ == "__main__":
    main()
