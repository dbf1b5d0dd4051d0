"""Command-line driver: ``critrouter {train,eval,sweep,ablate-xi,report}``.

Exit codes: 0 ok, 2 usage or config problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
from dataclasses import replace
from pathlib import Path

from .baselines import PolicyRouter, make_baseline
from .config import env_to_dict, load_config
from .env import ConfigError
from .evaluation import evaluate, turn_budget_sweep
from .policy import FeatureLayout, load_checkpoint, save_checkpoint
from .trainer import NumericalError, config_dict, train, write_records

log = logging.getLogger("critrouter")


class UsageError(Exception):
    pass


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup(args):
    env, config = load_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        overrides["iterations"] = args.iterations
    if overrides:
        config = replace(config, **overrides)
    return env, config


def _layout(env, config) -> FeatureLayout:
    return FeatureLayout(config.horizon, env.K, config.bins, env.signal)


def _router(args, env, config):
    if args.baseline:
        return make_baseline(args.baseline, env, seed=config.seed)
    if not args.checkpoint:
        raise UsageError("need --checkpoint or --baseline")
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise UsageError(f"checkpoint not found: {ckpt}")
    return PolicyRouter(load_checkpoint(ckpt, _layout(env, config)))


def parse_xi_grid(text: str) -> list:
    """``"0,0,0;0.25,0.125,0"`` -> ``[(0, 0, 0), (0.25, 0.125, 0)]``."""
    grid = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            grid.append(tuple(float(x) for x in chunk.split(",")))
        except ValueError:
            raise UsageError(f"bad --xi-grid entry {chunk!r}") from None
    if not grid:
        raise UsageError("--xi-grid is empty")
    return grid


# -- commands -------------------------------------------------------------------


def cmd_train(args) -> int:
    env, config = _setup(args)
    out = _out_dir(args.out)
    (out / "config.json").write_text(
        json.dumps({"pool": env_to_dict(env), "train": config_dict(config)}, indent=2) + "\n"
    )
    try:
        params, records = train(config, env)
    except NumericalError as exc:
        write_records(exc.records, out / "train.csv", env.K)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    save_checkpoint(params, out / "checkpoint.bin")
    write_records(records, out / "train.csv", env.K)
    if args.plot and records:
        from .plots import training_curves

        training_curves(records, out / "train.svg")
    print(f"wrote {out / 'checkpoint.bin'} and {out / 'train.csv'}")
    return 0


def cmd_eval(args) -> int:
    env, config = _setup(args)
    router = _router(args, env, config)
    T = args.turns or config.horizon
    res = evaluate(router, env, args.n, horizon=T, budgets=args.budget == "on", seed=config.seed)
    out = _out_dir(args.out)
    name = args.name or "eval"
    (out / f"{name}.json").write_text(res.to_json())
    (out / f"{name}.csv").write_text(res.to_csv())
    print(f"accuracy {res.accuracy:.4f}  shares {[round(float(s), 4) for s in res.usage.shares]}")
    return 0


def cmd_sweep(args) -> int:
    env, config = _setup(args)
    router = _router(args, env, config)
    try:
        turns = [int(t) for t in args.turns_list.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad --turns-list {args.turns_list!r}") from None
    if not turns or min(turns) < 1:
        raise UsageError("--turns-list needs positive integers")
    rows = turn_budget_sweep(router, env, turns, n=args.n, seed=config.seed, budgets=args.budget == "on")
    out = _out_dir(args.out)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["turns", "accuracy", "exhaustion_fraction", "strongest_share"])
        for r in rows:
            w.writerow([r.horizon, repr(r.accuracy), repr(r.exhaustion_fraction), repr(r.strongest_share)])
    from .plots import sweep_plot

    sweep_plot(rows, out / "sweep.svg")
    for r in rows:
        print(f"T={r.horizon}  accuracy {r.accuracy:.4f}  exhausted {r.exhaustion_fraction:.4f}")
    return 0


def cmd_ablate_xi(args) -> int:
    env, config = _setup(args)
    grid = parse_xi_grid(args.xi_grid)
    for xi in grid:
        if len(xi) != env.K:
            raise UsageError(f"xi setting {xi} needs {env.K} entries")
    out = _out_dir(args.out)
    series = {}
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["xi", "accuracy", "strongest_share"]
            + [f"share_{k}" for k in range(1, env.K + 1)]
            + [f"ratio_{k}" for k in range(1, env.K + 1)]
        )
        for xi in grid:
            cfg = replace(config, xi=xi)
            try:
                params, records = train(cfg, env)
            except NumericalError as exc:
                print(f"error: xi={xi}: {exc}", file=sys.stderr)
                return 3
            e = env.with_xi(xi)
            res = evaluate(PolicyRouter(params), e, args.n, horizon=cfg.horizon, budgets=args.budget == "on", seed=cfg.seed)
            u = res.usage
            label = "/".join(f"{x:g}" for x in xi)
            w.writerow(
                [label, repr(res.accuracy), repr(res.strongest_share)]
                + [repr(float(s)) for s in u.shares]
                + [repr(float(r)) for r in u.ratios]
            )
            series[f"xi={label}"] = records
            print(f"xi={label}  accuracy {res.accuracy:.4f}  strongest share {res.strongest_share:.4f}")
    from .plots import usage_curves

    usage_curves(series, env.K, out / "ablation.svg")
    return 0


def _mean_std(xs) -> str:
    if not xs:
        return "n/a"
    if len(xs) == 1:
        return f"{xs[0]:.4f}"
    return f"{statistics.mean(xs):.4f} ± {statistics.stdev(xs):.4f}"


def cmd_report(args) -> int:
    root = Path(args.metrics_dir)
    if not root.is_dir():
        raise UsageError(f"not a directory: {root}")
    evals = sorted(root.rglob("eval*.json"))
    trains = sorted(root.rglob("train.csv"))
    if not evals and not trains:
        raise UsageError(f"no eval*.json or train.csv under {root}")
    groups = {}
    for path in evals:
        try:
            m = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: {exc}") from None
        key = (m.get("router", "?"), m.get("horizon"), m.get("budgets"))
        groups.setdefault(key, []).append(m)
    lines = ["# Summary", ""]
    if groups:
        K = max(len(m["usage"]["shares"]) for ms in groups.values() for m in ms)
        head = ["router", "T", "budgets", "runs", "accuracy"] + [f"share {k}" for k in range(1, K + 1)]
        lines += ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for (router, T, budgets), ms in groups.items():
            cells = [str(router), str(T), "on" if budgets else "off", str(len(ms)), _mean_std([m["accuracy"] for m in ms])]
            for k in range(K):
                cells.append(_mean_std([m["usage"]["shares"][k] for m in ms if k < len(m["usage"]["shares"])]))
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
    if trains:
        finals = []
        for path in trains:
            with open(path) as fh:
                rows = list(csv.DictReader(fh))
            if rows:
                finals.append(rows[-1])
        if finals:
            lines += ["## Training (final iteration)", ""]
            keys = [k for k in finals[0] if k != "iter"]
            lines += ["| runs | " + " | ".join(keys) + " |", "|" + "---|" * (len(keys) + 1)]
            cells = [str(len(finals))] + [_mean_std([float(f[k]) for f in finals]) for k in keys]
            lines.append("| " + " | ".join(cells) + " |")
            lines.append("")
    out = Path(args.out) if args.out else root
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.md").write_text("\n".join(lines))
    print(f"wrote {out / 'summary.md'}")
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critrouter", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default="runs"):
        p.add_argument("--config", help="JSON config file (defaults when omitted)")
        p.add_argument("--out", default=out_default)
        p.add_argument("--seed", type=int)

    def router_flags(p, budget="on"):
        p.add_argument("--checkpoint")
        p.add_argument("--baseline", help="random | fixed:K | oracle | oneshot")
        p.add_argument("--budget", choices=("on", "off"), default=budget)
        p.add_argument("--n", type=int, default=4000, help="evaluation queries")

    p = sub.add_parser("train", help="train a controller")
    common(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--plot", action="store_true", help="also write train.svg")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or a baseline")
    common(p)
    router_flags(p)
    p.add_argument("--turns", type=int)
    p.add_argument("--name", help="output file stem (default eval)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="accuracy against inference turn budget")
    common(p)
    # shared budget state would couple horizons, so the default is off
    router_flags(p, budget="off")
    p.add_argument("--turns-list", default="1,2,3,4")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate-xi", help="train and evaluate over a grid of usage prices")
    common(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--xi-grid", required=True, help='settings split by ";", values by ",", e.g. "0,0,0;0.25,0.125,0"')
    p.add_argument("--budget", choices=("on", "off"), default="off")
    p.add_argument("--n", type=int, default=4000)
    p.set_defaults(func=cmd_ablate_xi)

    p = sub.add_parser("report", help="markdown summary of a metrics directory")
    p.add_argument("metrics_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if getattr(args, "n", 1) < 1:
            raise UsageError("--n must be positive")
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
