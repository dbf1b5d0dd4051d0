"""Greedy evaluation, budget fallback, usage audits and confusion matrices."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .env import DIFFICULTIES, AgentEnv, ConfigError, Terminal
from .reward import ControllerAction, Verdict


@dataclass(frozen=True)
class Step:
    turn: int
    action: ControllerAction
    requested: Optional[int]  # agent the router asked for, before fallback
    invoked: Optional[int]
    draft_correct: Optional[bool]
    prior_correct: Optional[bool]
    prior_agent: Optional[int]


@dataclass(frozen=True)
class Trajectory:
    query_id: int
    difficulty: int
    steps: tuple
    terminal: Terminal

    @property
    def invocations(self) -> list:
        return [s.invoked for s in self.steps if s.invoked is not None]


@dataclass
class UsageReport:
    counts: np.ndarray
    n_queries: int
    rho: Optional[np.ndarray] = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def ratios(self) -> np.ndarray:
        return self.counts / self.n_queries if self.n_queries else np.zeros(len(self.counts))

    @property
    def shares(self) -> np.ndarray:
        t = self.total
        return self.counts / t if t else np.zeros(len(self.counts))

    @property
    def over_budget(self) -> list:
        if self.rho is None:
            return [False] * len(self.counts)
        return [bool(s > r + 1e-12) for s, r in zip(self.shares, self.rho)]


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    rows: tuple
    cols: tuple

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_lists(self) -> list:
        return [[int(x) for x in row] for row in self.counts]

    def render(self) -> str:
        width = max(len(c) for c in self.cols + self.rows) + 2
        head = " " * width + "".join(c.rjust(width) for c in self.cols)
        lines = [head]
        for name, row in zip(self.rows, self.counts):
            lines.append(name.ljust(width) + "".join(str(int(x)).rjust(width) for x in row))
        return "\n".join(lines)


def recall_incorrect(matrix) -> float:
    """Share of incorrect drafts that were rejected.  ``matrix`` has rows
    (actual incorrect, actual correct) and columns (rejected, accepted)."""
    m = np.asarray(matrix.counts if isinstance(matrix, ConfusionMatrix) else matrix, dtype=float)
    denom = m[0, 0] + m[0, 1]
    return float(m[0, 0] / denom) if denom else float("nan")


# -- budgets ------------------------------------------------------------------


class BudgetTracker:
    """Cumulative invocation shares over an evaluation stream.

    Agent k may take the next call when ``(count_k + 1) <= rho_k (total + 1)``.
    """

    def __init__(self, env: AgentEnv):
        self.env = env
        self.rho = np.array([a.rho for a in env.agents])
        if not np.any(self.rho >= 1.0):
            raise ConfigError("budgets need at least one agent with rho = 1")
        self.counts = np.zeros(env.K, dtype=np.int64)

    def available(self, k: int) -> bool:
        total = self.counts.sum()
        return self.counts[k - 1] + 1 <= self.rho[k - 1] * (total + 1) + 1e-12

    def resolve(self, k: int) -> int:
        if self.available(k):
            return k
        env = self.env
        r = env.rank(k)
        weaker = [j for j in env.by_strength if env.rank(j) > r and self.available(j)]
        if weaker:
            return weaker[0]
        for j in reversed(env.by_strength):
            if self.available(j):
                return j
        return env.weakest  # unreachable while some rho is 1

    def record(self, k: int) -> None:
        self.counts[k - 1] += 1


# -- rollouts -----------------------------------------------------------------


def query_stream_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xE7, index)))


def run_episode(router, env: AgentEnv, query, horizon: int, rng, budget: Optional[BudgetTracker] = None) -> Trajectory:
    state = env.initial_state(query)
    steps = []
    while True:
        action = router.act(state, env, rng)
        action.validate()
        requested = action.route_to
        invoked = None
        draft = None
        if requested is not None:
            invoked = budget.resolve(requested) if budget is not None else requested
            if invoked != requested:
                action = ControllerAction(action.verdict, invoked, action.turn_issued)
            draft = env.invoke_agent(invoked, state, rng, horizon=horizon)
            if budget is not None:
                budget.record(invoked)
        prior = state.last_draft
        steps.append(
            Step(
                state.turn,
                action,
                requested,
                invoked,
                None if draft is None else draft.correct,
                None if prior is None else prior.correct,
                None if prior is None else prior.producing_agent,
            )
        )
        nxt = env.transition(state, action, draft, horizon=horizon)
        if isinstance(nxt, Terminal):
            return Trajectory(query.id, query.difficulty, tuple(steps), nxt)
        state = nxt


@dataclass
class EvalResult:
    trajectories: list
    env: AgentEnv
    horizon: int
    budgets: bool
    seed: int
    router_name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.trajectories)

    @property
    def accuracy(self) -> float:
        return sum(t.terminal.correct for t in self.trajectories) / self.n if self.n else 0.0

    @property
    def usage(self) -> UsageReport:
        counts = np.zeros(self.env.K, dtype=np.int64)
        for t in self.trajectories:
            for k in t.invocations:
                counts[k - 1] += 1
        return UsageReport(counts, self.n, np.array([a.rho for a in self.env.agents]))

    @property
    def termination_histogram(self) -> list:
        """Episodes ending at each turn 1..T."""
        hist = [0] * self.horizon
        for t in self.trajectories:
            hist[t.terminal.turn - 1] += 1
        return hist

    @property
    def exhaustion_fraction(self) -> float:
        return sum(t.terminal.exhausted for t in self.trajectories) / self.n if self.n else 0.0

    @property
    def strongest_share(self) -> float:
        return float(self.usage.shares[self.env.strongest - 1])

    def routing_confusion(self) -> ConfusionMatrix:
        return routing_confusion_from(self.trajectories, self.env)

    def verification_confusion(self, turn: int = 2) -> ConfusionMatrix:
        return verification_confusion_from(self.trajectories, self.env, turn)

    def metrics(self) -> dict:
        u = self.usage
        return {
            "accuracy": self.accuracy,
            "usage": {
                "ratios": [float(x) for x in u.ratios],
                "shares": [float(x) for x in u.shares],
                "counts": [int(x) for x in u.counts],
            },
            "termination_histogram": self.termination_histogram,
            "confusion": {
                "routing": self.routing_confusion().to_lists(),
                "verification": self.verification_confusion().to_lists(),
            },
            "exhaustion_fraction": self.exhaustion_fraction,
            "n": self.n,
            "horizon": self.horizon,
            "budgets": self.budgets,
            "seed": self.seed,
            "router": self.router_name,
            **self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.metrics(), indent=2) + "\n"

    def to_csv(self) -> str:
        return metrics_csv(self.metrics())


def evaluate(
    router,
    env: AgentEnv,
    n: int,
    horizon: Optional[int] = None,
    budgets: bool = False,
    seed: int = 0,
) -> EvalResult:
    """Run ``n`` episodes in arrival order.  Query ``i`` draws everything from
    its own seeded stream, so results do not depend on batching."""
    if n < 1:
        raise ConfigError("evaluation needs n >= 1")
    T = horizon or env.horizon
    env = env.fresh()
    tracker = BudgetTracker(env) if budgets else None
    trajectories = []
    for i in range(n):
        rng = query_stream_rng(seed, i)
        query = env.sample_query(rng, query_id=i)
        trajectories.append(run_episode(router, env, query, T, rng, tracker))
    return EvalResult(trajectories, env, T, budgets, seed, getattr(router, "name", type(router).__name__))


def metrics_csv(metrics: dict) -> str:
    """One header row and one value row; nested lists are flattened with
    index suffixes."""
    flat = []

    def walk(prefix, value):
        if isinstance(value, dict):
            for k, v in value.items():
                walk(f"{prefix}.{k}" if prefix else k, v)
        elif isinstance(value, (list, tuple)):
            for i, v in enumerate(value):
                walk(f"{prefix}_{i + 1}", v)
        else:
            flat.append((prefix, value))

    walk("", metrics)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([k for k, _ in flat])
    w.writerow(["" if v is None else v for _, v in flat])
    return buf.getvalue()


# -- confusion matrices ---------------------------------------------------------


def routing_confusion_from(trajectories: Sequence[Trajectory], env: AgentEnv) -> ConfusionMatrix:
    """Latent difficulty against the turn-1 agent, columns weakest first."""
    cols = tuple(reversed(env.by_strength))
    m = np.zeros((len(DIFFICULTIES), env.K), dtype=np.int64)
    for t in trajectories:
        first = t.steps[0]
        if first.invoked is not None:
            m[t.difficulty, cols.index(first.invoked)] += 1
    return ConfusionMatrix(m, DIFFICULTIES, tuple(env.agent(k).name for k in cols))


def routing_confusion(router, env: AgentEnv, n: int, seed: int = 0) -> ConfusionMatrix:
    return evaluate(router, env, n, horizon=1, seed=seed).routing_confusion()


def verification_confusion_from(trajectories: Sequence[Trajectory], env: AgentEnv, turn: int = 2) -> ConfusionMatrix:
    """Verdicts on the previous draft at ``turn``; rows actual (incorrect,
    correct), columns (rejected, accepted).  Drafts by the strongest agent are
    left out since there is nothing stronger to escalate to."""
    m = np.zeros((2, 2), dtype=np.int64)
    for t in trajectories:
        for s in t.steps:
            if s.turn != turn or s.prior_correct is None or s.prior_agent == env.strongest:
                continue
            accepted = s.action.verdict is Verdict.ACCEPT
            m[int(s.prior_correct), int(accepted)] += 1
    return ConfusionMatrix(m, ("actual incorrect", "actual correct"), ("rejected", "accepted"))


def verification_confusion(router, env: AgentEnv, n: int, turn: int = 2, seed: int = 0) -> ConfusionMatrix:
    return evaluate(router, env, n, seed=seed).verification_confusion(turn)


# -- audits and sweeps ------------------------------------------------------------


@dataclass
class AuditReport:
    counts: np.ndarray
    n_queries: int
    rho: np.ndarray
    horizon: int
    shares: np.ndarray
    per_query: np.ndarray
    share_margin: np.ndarray  # rho - share; negative means violated
    per_query_margin: np.ndarray  # rho*T - mean invocations per query

    @property
    def share_violations(self) -> list:
        return [bool(m < -1e-12) for m in self.share_margin]

    @property
    def per_query_violations(self) -> list:
        return [bool(m < -1e-12) for m in self.per_query_margin]

    @property
    def empty(self) -> bool:
        return self.n_queries == 0


def constraint_audit(trajectories: Sequence[Trajectory], pool, horizon: int) -> AuditReport:
    """Check both the invocation-share form and the relaxed ``rho_k T`` per
    query form of the usage constraint."""
    agents = pool.agents if isinstance(pool, AgentEnv) else tuple(pool)
    K = len(agents)
    rho = np.array([a.rho for a in agents])
    counts = np.zeros(K, dtype=np.int64)
    for t in trajectories:
        for k in t.invocations:
            counts[k - 1] += 1
    n = len(trajectories)
    total = counts.sum()
    shares = counts / total if total else np.zeros(K)
    per_query = counts / n if n else np.zeros(K)
    return AuditReport(counts, n, rho, horizon, shares, per_query, rho - shares, rho * horizon - per_query)


@dataclass(frozen=True)
class SweepRow:
    horizon: int
    accuracy: float
    exhaustion_fraction: float
    strongest_share: float


def turn_budget_sweep(router, env: AgentEnv, horizons: Sequence[int], n: int = 4000, seed: int = 0, budgets: bool = False) -> list:
    rows = []
    for T in horizons:
        res = evaluate(router, env, n, horizon=T, budgets=budgets, seed=seed)
        rows.append(SweepRow(T, res.accuracy, res.exhaustion_fraction, res.strongest_share))
    return rows
