"""Reusable experiment drivers shared by the scripts and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .baselines import OneShotRouter, PolicyRouter, RandomRouter
from .env import AgentEnv, default_env
from .evaluation import EvalResult, evaluate, turn_budget_sweep
from .trainer import TrainConfig, TrainRecord, train

# desk-scale settings: S=300, |D_b|=64, G=4, T=3
DESK = TrainConfig(batch_size=64, iterations=300, group_size=4, horizon=3)


@dataclass
class SeedRun:
    seed: int
    xi: tuple
    params: object
    records: list
    result: EvalResult
    random: EvalResult
    oneshot: EvalResult
    sweep: list = field(default_factory=list)


def eval_seed(seed: int) -> int:
    # keep evaluation streams disjoint from training streams
    return 10_000 + seed


def run_seed(
    seed: int,
    xi: Sequence[float] = (0.25, 0.125, 0.0),
    env: Optional[AgentEnv] = None,
    base: TrainConfig = DESK,
    n_eval: int = 4000,
    sweep_turns: Sequence[int] = (),
    budgets: bool = False,
) -> SeedRun:
    env = env or default_env()
    cfg = replace(base, seed=seed, xi=tuple(xi))
    params, records = train(cfg, env)
    e = env.with_xi(cfg.xi)
    es = eval_seed(seed)
    router = PolicyRouter(params)
    res = evaluate(router, e, n_eval, horizon=cfg.horizon, budgets=budgets, seed=es)
    rnd = evaluate(RandomRouter(), e, n_eval, horizon=cfg.horizon, budgets=budgets, seed=es)
    one = evaluate(OneShotRouter.fit(e, seed=seed), e, n_eval, horizon=cfg.horizon, budgets=budgets, seed=es)
    sweep = turn_budget_sweep(router, e, sweep_turns, n=n_eval, seed=es) if sweep_turns else []
    return SeedRun(seed, cfg.xi, params, records, res, rnd, one, sweep)


def summarize(runs: Sequence[SeedRun]) -> dict:
    def ms(xs):
        xs = np.asarray(xs, dtype=float)
        return float(xs.mean()), float(xs.std(ddof=1)) if len(xs) > 1 else 0.0

    return {
        "controller": ms([r.result.accuracy for r in runs]),
        "random": ms([r.random.accuracy for r in runs]),
        "oneshot": ms([r.oneshot.accuracy for r in runs]),
        "strongest_share": ms([r.result.strongest_share for r in runs]),
        "shares": np.mean([r.result.usage.shares for r in runs], axis=0).tolist(),
    }
