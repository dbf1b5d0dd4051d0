"""Simulated heterogeneous agent pool and the controller's MDP dynamics.

Agents are calibrated Bernoulli responders: each has a per-difficulty success
probability and a refinement bonus applied when it is asked to redo a draft
the controller rejected.  Every draft carries a Gaussian quality signal whose
mean depends on whether the draft is correct; that signal is all the
controller gets to verify with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .reward import ContractError, ControllerAction, Verdict

DIFFICULTIES = ("easy", "medium", "hard")
INITIAL = "initial"
SUBSEQUENT = "subsequent"


class ConfigError(ValueError):
    """Invalid pool or training configuration."""


@dataclass(frozen=True)
class Query:
    id: int
    difficulty: int  # index into DIFFICULTIES; latent, never shown to the policy
    difficulty_observation: float

    @property
    def difficulty_name(self) -> str:
        return DIFFICULTIES[self.difficulty]

    @property
    def observed_class(self) -> int:
        return int(round(self.difficulty_observation))


@dataclass(frozen=True)
class AgentProfile:
    agent_id: int
    name: str
    success_prob: Mapping[str, float]
    refinement_bonus: float = 0.0
    strength_rank: int = 1
    rho: float = 1.0
    xi: float = 0.0

    def __post_init__(self):
        for d in DIFFICULTIES:
            p = self.success_prob.get(d)
            if p is None or not 0.0 <= p <= 1.0:
                raise ConfigError(f"{self.name}: success_prob[{d}] must be in [0, 1]")
        if not 0.0 <= self.refinement_bonus <= 1.0:
            raise ConfigError(f"{self.name}: refinement_bonus must be in [0, 1]")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"{self.name}: rho must be in (0, 1]")
        if self.xi < 0:
            raise ConfigError(f"{self.name}: xi must be nonnegative")

    def p_correct(self, difficulty: int, refined: bool = False) -> float:
        p = self.success_prob[DIFFICULTIES[difficulty]]
        if refined:
            p += self.refinement_bonus
        return min(1.0, max(0.0, p))


@dataclass(frozen=True)
class SignalModel:
    mu_correct: float = 1.0
    mu_incorrect: float = 0.0
    sigma: float = 0.5


@dataclass(frozen=True)
class Draft:
    producing_agent: int
    correct: bool
    quality_signal: float
    turn_produced: int


@dataclass(frozen=True)
class ControllerState:
    query: Query
    turn: int
    phase: str = INITIAL
    last_agent: Optional[int] = None
    last_draft: Optional[Draft] = None


@dataclass(frozen=True)
class Terminal:
    """End of an episode.  ``final_draft`` is the answer returned to the user."""

    query: Query
    final_draft: Optional[Draft]
    turn: int
    accepted: bool
    exhausted: bool

    @property
    def correct(self) -> bool:
        return self.final_draft is not None and self.final_draft.correct


Node = Union[ControllerState, Terminal]


def check_weights(weights: Sequence[float]) -> tuple:
    w = tuple(float(x) for x in weights)
    if len(w) != len(DIFFICULTIES):
        raise ConfigError("difficulty_weights needs one entry per difficulty")
    if any(x < 0 or not math.isfinite(x) for x in w) or abs(sum(w) - 1.0) > 1e-9:
        raise ConfigError("difficulty_weights must be a probability vector")
    return w


def sample_query(
    rng: np.random.Generator,
    difficulty_weights: Sequence[float],
    flip_prob: float = 0.0,
    query_id: int = 0,
) -> Query:
    w = check_weights(difficulty_weights)
    u = rng.random()
    difficulty = len(w) - 1
    acc = 0.0
    for i, wi in enumerate(w):
        acc += wi
        if u < acc:
            difficulty = i
            break
    observed = difficulty
    if flip_prob > 0.0 and rng.random() < flip_prob:
        others = [d for d in range(len(w)) if d != difficulty]
        observed = others[int(rng.integers(len(others)))]
    return Query(id=query_id, difficulty=difficulty, difficulty_observation=float(observed))


@dataclass
class AgentEnv:
    """Agent pool plus query distribution, observation noise and horizon.

    ``invocations`` is the only mutable part; workers keep their own env copy
    and merge counters afterwards.
    """

    agents: tuple
    difficulty_weights: tuple = (0.35, 0.20, 0.45)
    signal: SignalModel = field(default_factory=SignalModel)
    flip_prob: float = 0.15
    horizon: int = 3
    invocations: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.agents = tuple(sorted(self.agents, key=lambda a: a.agent_id))
        self.difficulty_weights = check_weights(self.difficulty_weights)
        ids = [a.agent_id for a in self.agents]
        if ids != list(range(1, len(ids) + 1)):
            raise ConfigError("agent ids must be 1..K")
        ranks = sorted(a.strength_rank for a in self.agents)
        if ranks != list(range(1, len(ids) + 1)):
            raise ConfigError("strength_rank must be a bijection onto 1..K")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigError("flip_prob must be in [0, 1]")
        if self.signal.sigma < 0:
            raise ConfigError("signal sigma must be nonnegative")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.invocations is None:
            self.invocations = np.zeros(len(self.agents), dtype=np.int64)
        # strongest first
        self.by_strength = tuple(a.agent_id for a in sorted(self.agents, key=lambda a: a.strength_rank))
        self.xi = np.array([a.xi for a in self.agents])

    @property
    def K(self) -> int:
        return len(self.agents)

    def agent(self, agent_id: int) -> AgentProfile:
        return self.agents[agent_id - 1]

    def rank(self, agent_id: int) -> int:
        return self.agents[agent_id - 1].strength_rank

    @property
    def strongest(self) -> int:
        return self.by_strength[0]

    @property
    def weakest(self) -> int:
        return self.by_strength[-1]

    def stronger_than(self, agent_id: int) -> list:
        r = self.rank(agent_id)
        return [a.agent_id for a in self.agents if a.strength_rank < r]

    def with_xi(self, xi: Sequence[float]) -> "AgentEnv":
        if len(xi) != self.K:
            raise ConfigError("xi needs one entry per agent")
        agents = tuple(replace(a, xi=float(x)) for a, x in zip(self.agents, xi))
        return replace(self, agents=agents, invocations=None)

    def with_horizon(self, horizon: int) -> "AgentEnv":
        return replace(self, horizon=horizon, invocations=None)

    def fresh(self) -> "AgentEnv":
        return replace(self, invocations=None)

    def reset_counters(self) -> None:
        self.invocations[:] = 0

    def merge_counters(self, counts) -> None:
        self.invocations += np.asarray(counts, dtype=np.int64)

    # -- dynamics ---------------------------------------------------------

    def sample_query(self, rng: np.random.Generator, query_id: int = 0) -> Query:
        return sample_query(rng, self.difficulty_weights, self.flip_prob, query_id)

    def initial_state(self, query: Query) -> ControllerState:
        return ControllerState(query=query, turn=1)

    def invoke_agent(
        self, agent_id: int, state: ControllerState, rng: np.random.Generator, horizon: Optional[int] = None
    ) -> Draft:
        if state.turn > (horizon or self.horizon):
            raise ContractError("state is past the horizon")
        agent = self.agents[agent_id - 1]
        # a route after turn 1 always follows a rejected draft
        p = agent.p_correct(state.query.difficulty, refined=state.last_draft is not None)
        correct = bool(rng.random() < p)
        mu = self.signal.mu_correct if correct else self.signal.mu_incorrect
        signal = mu + self.signal.sigma * float(rng.standard_normal())
        self.invocations[agent_id - 1] += 1
        return Draft(agent_id, correct, signal, state.turn)

    def transition(
        self,
        state: ControllerState,
        action: ControllerAction,
        draft: Optional[Draft],
        horizon: Optional[int] = None,
    ) -> Node:
        """Next state, or :class:`Terminal` on stop or once the horizon is hit."""
        if action.routes:
            if draft is None:
                raise ContractError("routing action executed without a draft")
            if state.turn >= (horizon or self.horizon):
                return Terminal(state.query, draft, state.turn, accepted=False, exhausted=True)
            return ControllerState(
                query=state.query,
                turn=state.turn + 1,
                phase=SUBSEQUENT,
                last_agent=action.route_to,
                last_draft=draft,
            )
        if state.last_draft is None:
            raise ContractError("cannot stop before any agent has answered")
        return Terminal(
            state.query,
            state.last_draft,
            state.turn,
            accepted=action.verdict is Verdict.ACCEPT,
            exhausted=False,
        )


def default_pool(xi: Sequence[float] = (0.25, 0.125, 0.0)) -> tuple:
    """Three-agent pool whose accuracies under the default difficulty mix
    (0.35, 0.20, 0.45) are 0.859, 0.517 and 0.345.

    Difficulty follows the minimum-capable-agent reading: weaker agents are
    as good as or slightly better than the strongest on the classes they can
    solve and nearly useless above them.
    """
    spec = [
        ("agent-1", (0.90, 0.84, 0.835), 0.0, 1, 0.25),
        ("agent-2", (0.92, 0.86, 0.05), 0.10, 2, 0.5),
        ("agent-3", (0.92, 0.07, 0.02), 0.05, 3, 1.0),
    ]
    return tuple(
        AgentProfile(
            agent_id=i + 1,
            name=name,
            success_prob=dict(zip(DIFFICULTIES, probs)),
            refinement_bonus=bonus,
            strength_rank=rank,
            rho=rho,
            xi=float(x),
        )
        for i, ((name, probs, bonus, rank, rho), x) in enumerate(zip(spec, xi))
    )


def default_env(**overrides) -> AgentEnv:
    xi = overrides.pop("xi", (0.25, 0.125, 0.0))
    return AgentEnv(agents=default_pool(xi), **overrides)


def mean_accuracy(agent: AgentProfile, weights: Sequence[float]) -> float:
    """Expected one-shot accuracy of ``agent`` under a difficulty mix."""
    return sum(w * agent.p_correct(d) for d, w in enumerate(weights))
