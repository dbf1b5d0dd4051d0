"""JSON experiment configs: a ``pool`` section for the environment and a
``train`` section for the trainer.  Missing keys take the defaults."""

from __future__ import annotations

import json
from dataclasses import fields
from pathlib import Path

from .env import DIFFICULTIES, AgentEnv, AgentProfile, ConfigError, SignalModel, default_env
from .trainer import TrainConfig


def env_from_dict(pool: dict) -> AgentEnv:
    base = default_env()
    agents_cfg = pool.get("agents")
    if agents_cfg is None:
        agents = base.agents
    else:
        if not agents_cfg:
            raise ConfigError("pool.agents must not be empty")
        agents = []
        K = len(agents_cfg)
        for i, a in enumerate(agents_cfg):
            try:
                probs = {d: float(a["success_prob"][d]) for d in DIFFICULTIES}
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"agent {i + 1}: success_prob needs easy/medium/hard") from exc
            agents.append(
                AgentProfile(
                    agent_id=i + 1,
                    name=str(a.get("name", f"agent-{i + 1}")),
                    success_prob=probs,
                    refinement_bonus=float(a.get("refinement_bonus", 0.0)),
                    # listed strongest first unless ranks are given
                    strength_rank=int(a.get("strength_rank", i + 1)),
                    rho=float(a.get("rho", 1.0)),
                    xi=float(a.get("xi", 0.0)),
                )
            )
        if K != len({a.strength_rank for a in agents}):
            raise ConfigError("strength_rank values must be distinct")
    sig = pool.get("signal", {})
    signal = SignalModel(
        float(sig.get("mu_correct", base.signal.mu_correct)),
        float(sig.get("mu_incorrect", base.signal.mu_incorrect)),
        float(sig.get("sigma", base.signal.sigma)),
    )
    return AgentEnv(
        agents=tuple(agents),
        difficulty_weights=tuple(pool.get("difficulty_weights", base.difficulty_weights)),
        signal=signal,
        flip_prob=float(pool.get("observation", {}).get("flip_prob", base.flip_prob)),
        horizon=int(pool.get("horizon", base.horizon)),
    )


def train_from_dict(train: dict, env: AgentEnv) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(train) - known
    if unknown:
        raise ConfigError(f"unknown train keys: {sorted(unknown)}")
    kw = dict(train)
    kw.setdefault("horizon", env.horizon)
    # the pool's own xi values unless the train section overrides them
    kw.setdefault("xi", tuple(a.xi for a in env.agents))
    try:
        return TrainConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None):
    """``(env, train_config)`` from a JSON file, or the defaults for ``None``."""
    if path is None:
        raw = {}
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
    try:
        env = env_from_dict(raw.get("pool", {}))
        config = train_from_dict(raw.get("train", {}), env)
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config: {exc}") from exc
    return env, config


def env_to_dict(env: AgentEnv) -> dict:
    return {
        "agents": [
            {
                "name": a.name,
                "success_prob": {d: a.success_prob[d] for d in DIFFICULTIES},
                "refinement_bonus": a.refinement_bonus,
                "strength_rank": a.strength_rank,
                "rho": a.rho,
                "xi": a.xi,
            }
            for a in env.agents
        ],
        "difficulty_weights": list(env.difficulty_weights),
        "signal": {
            "mu_correct": env.signal.mu_correct,
            "mu_incorrect": env.signal.mu_incorrect,
            "sigma": env.signal.sigma,
        },
        "observation": {"flip_prob": env.flip_prob},
        "horizon": env.horizon,
    }
