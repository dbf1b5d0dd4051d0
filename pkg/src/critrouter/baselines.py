"""Reference routers.

Every router exposes ``act(state, env, rng) -> ControllerAction``.  The
one-shot routers pick an agent at turn 1 and accept whatever comes back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.linear_model import LogisticRegression

from .env import AgentEnv, ConfigError, ControllerState
from .policy import FeatureLayout, PolicyParams, action_from_index, sample_index
from .reward import ControllerAction, Verdict

ACCEPT = Verdict.ACCEPT


def _accept(state: ControllerState) -> ControllerAction:
    return ControllerAction(ACCEPT, None, state.turn)


class RandomRouter:
    """Uniform over agents, then accept."""

    name = "random"
    one_shot = True

    def act(self, state, env, rng):
        if state.turn > 1:
            return _accept(state)
        k = int(rng.integers(env.K)) + 1
        return ControllerAction(None, k, 1)


@dataclass
class FixedAgentRouter:
    agent_id: int
    one_shot = True

    @property
    def name(self) -> str:
        return f"fixed:{self.agent_id}"

    def act(self, state, env, rng):
        if state.turn > 1:
            return _accept(state)
        if not 1 <= self.agent_id <= env.K:
            raise ConfigError(f"no agent {self.agent_id} in a pool of {env.K}")
        return ControllerAction(None, self.agent_id, 1)


def oracle_choice(env: AgentEnv, difficulty: int, threshold: float = 0.5) -> int:
    """Weakest agent whose success probability on ``difficulty`` clears the
    threshold; the strongest agent when none does."""
    for k in reversed(env.by_strength):
        if env.agent(k).p_correct(difficulty) > threshold:
            return k
    return env.strongest


@dataclass
class OracleRouter:
    """Reads the latent difficulty.  Not a deployable router."""

    threshold: float = 0.5
    name = "oracle"
    one_shot = True

    def act(self, state, env, rng):
        if state.turn > 1:
            return _accept(state)
        return ControllerAction(None, oracle_choice(env, state.query.difficulty, self.threshold), 1)


@dataclass
class OneShotRouter:
    """Multinomial logistic regression from turn-1 features to the oracle's
    agent choice."""

    layout: FeatureLayout
    model: LogisticRegression
    name = "oneshot"
    one_shot = True
    _table: dict = field(default_factory=dict, repr=False)

    @classmethod
    def fit(
        cls,
        env: AgentEnv,
        n_train: int = 5000,
        seed: int = 0,
        threshold: float = 0.5,
        bins: int = 8,
    ) -> "OneShotRouter":
        layout = FeatureLayout(env.horizon, env.K, bins, env.signal)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x1E,)))
        X = np.zeros((n_train, layout.dim))
        y = np.zeros(n_train, dtype=int)
        for i in range(n_train):
            q = env.sample_query(rng, query_id=i)
            X[i] = layout.encode(env.initial_state(q))
            y[i] = oracle_choice(env, q.difficulty, threshold)
        if len(set(y)) == 1:
            model = _ConstantModel(int(y[0]))
        else:
            model = LogisticRegression(C=10.0, max_iter=2000)
            model.fit(X, y)
        return cls(layout, model)

    def act(self, state, env, rng):
        if state.turn > 1:
            return _accept(state)
        key = self.layout.state_key(state)
        k = self._table.get(key)
        if k is None:
            k = int(self.model.predict(self.layout.encode(state)[None, :])[0])
            self._table[key] = k
        return ControllerAction(None, k, 1)


@dataclass
class _ConstantModel:
    label: int

    def predict(self, X):
        return np.full(len(X), self.label)


@dataclass
class PolicyRouter:
    """A trained controller.  ``temperature=0`` decodes greedily."""

    params: PolicyParams
    temperature: float = 0.0
    name = "policy"
    one_shot = False

    def act(self, state, env, rng):
        row, _ = sample_index(self.params, state, env, rng, self.temperature)
        return action_from_index(row, env.K, state.turn)


def make_baseline(spec: str, env: AgentEnv, seed: int = 0):
    """``random``, ``fixed:K``, ``oracle`` or ``oneshot``."""
    if spec == "random":
        return RandomRouter()
    if spec == "oracle":
        return OracleRouter()
    if spec == "oneshot":
        return OneShotRouter.fit(env, seed=seed)
    if spec.startswith("fixed:"):
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad baseline {spec!r}") from None
        if not 1 <= k <= env.K:
            raise ConfigError(f"no agent {k} in a pool of {env.K}")
        return FixedAgentRouter(k)
    raise ConfigError(f"unknown baseline {spec!r}")
