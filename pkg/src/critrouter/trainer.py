"""On-policy group-relative policy gradient for the multi-turn controller.

Each iteration samples a batch of queries, grows one rollout tree per query,
turns group-relative advantages into a score-function gradient and takes a
plain ascent step ``theta += lr * g``.  No clipping, no KL term, one update
per batch.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .env import AgentEnv, AgentProfile, ConfigError
from .exact import exact_objective
from .policy import PolicyParams
from .rollout import RolloutTree, build_tree, compute_advantages

log = logging.getLogger(__name__)

SCALINGS = ("algorithm", "path", "sum")


class NumericalError(RuntimeError):
    def __init__(self, message: str, record: "TrainRecord", records: Optional[list] = None):
        super().__init__(message)
        self.record = record
        self.records = records or []


@dataclass
class TrainConfig:
    batch_size: int = 128
    group_size: int = 4
    horizon: int = 3
    gamma: float = 1.0
    # tuned for the 1/|B_T| scaling, which shrinks steps by up to G**(T-1)
    learning_rate: float = 10.0
    iterations: int = 400
    seed: int = 0
    xi: Optional[tuple] = (0.25, 0.125, 0.0)
    eval_every: int = 0
    bins: int = 8
    temperature: float = 1.0
    # "algorithm": divide each query's sum by |B_T|; "path": weight a turn-t
    # node by G**-(t-1); "sum": no weighting
    scaling: str = "algorithm"

    def __post_init__(self):
        if self.group_size < 2:
            raise ConfigError("group_size must be at least 2")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1]")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ConfigError("learning_rate must be a nonnegative finite number")
        if self.batch_size < 1 or self.horizon < 1 or self.iterations < 0:
            raise ConfigError("batch_size and horizon must be positive, iterations nonnegative")
        if self.scaling not in SCALINGS:
            raise ConfigError(f"scaling must be one of {SCALINGS}")
        if self.temperature <= 0:
            raise ConfigError("training temperature must be positive")
        if self.xi is not None:
            self.xi = tuple(float(x) for x in self.xi)
            if any(x < 0 for x in self.xi):
                raise ConfigError("xi must be nonnegative")


@dataclass
class TrainRecord:
    iteration: int
    reward_mod: float
    reward_raw: float
    route_acc: float
    verify_acc: float
    usage: tuple
    grad_norm: float

    def csv_row(self) -> list:
        return [
            self.iteration,
            _fmt(self.reward_mod),
            _fmt(self.reward_raw),
            _fmt(self.route_acc),
            _fmt(self.verify_acc),
            *[_fmt(u) for u in self.usage],
            _fmt(self.grad_norm),
        ]


def _fmt(x: float) -> str:
    return repr(float(x))


def csv_header(K: int) -> list:
    return ["iter", "reward_mod", "reward_raw", "route_acc", "verify_acc"] + [
        f"usage_{k}" for k in range(1, K + 1)
    ] + ["grad_norm"]


def write_records(records: Sequence[TrainRecord], path, K: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(K))
        for rec in records:
            w.writerow(rec.csv_row())


# -- gradients ------------------------------------------------------------------


def node_terms(params: PolicyParams, tree: RolloutTree, env: AgentEnv, scaling: str = "algorithm"):
    """Yield ``(key, legal, active, coeff)`` per internal node, where the
    node's gradient contribution is ``coeff[:, None]`` on ``(legal, active)``.
    """
    G = tree.group_size
    if scaling == "algorithm":
        survivors = tree.surviving_at_horizon
        scale = 1.0 / survivors if survivors > 0 else 1.0
    for node in tree.internal_nodes():
        key, legal, probs, _, active = params.lookup(node.state, env)
        if scaling == "path":
            scale = float(G) ** -(node.turn - 1)
        elif scaling == "sum":
            scale = 1.0
        coeff = np.zeros(len(legal))
        total_adv = 0.0
        for edge in node.edges:
            coeff[legal.index(edge.row)] += edge.advantage
            total_adv += edge.advantage
        # (1/G) sum_i A_i (e_{a_i} - pi)
        coeff = (coeff - total_adv * probs) * (scale / G)
        yield key, legal, active, coeff


def query_gradient(
    params: PolicyParams, tree: RolloutTree, env: AgentEnv, scaling: str = "algorithm"
) -> np.ndarray:
    """Group-relative policy-gradient estimate from one built and scored tree."""
    grad = np.zeros_like(params.weights)
    for _, legal, active, coeff in node_terms(params, tree, env, scaling):
        grad[np.ix_(legal, active)] += coeff[:, None]
    return grad


@dataclass
class TreeStats:
    """Reach-weighted per-query sums; an edge at turn t has weight G**-t."""

    reward_mod: float = 0.0
    reward_raw: float = 0.0
    route_hits: float = 0.0
    route_weight: float = 0.0
    verify_hits: float = 0.0
    verify_weight: float = 0.0
    usage: np.ndarray = None

    @classmethod
    def of(cls, tree: RolloutTree, K: int) -> "TreeStats":
        st = cls(usage=np.zeros(K))
        G = tree.group_size
        for node in tree.internal_nodes():
            w = float(G) ** -node.turn
            for e in node.edges:
                st.reward_mod += w * e.reward.modified_composite
                st.reward_raw += w * e.reward.composite
                if e.action.route_to is not None:
                    st.route_hits += w * e.reward.r_route
                    st.route_weight += w
                    st.usage[e.action.route_to - 1] += w
                if node.turn > 1:
                    st.verify_hits += w * e.reward.r_verify
                    st.verify_weight += w
        return st

    def add(self, other: "TreeStats") -> None:
        self.reward_mod += other.reward_mod
        self.reward_raw += other.reward_raw
        self.route_hits += other.route_hits
        self.route_weight += other.route_weight
        self.verify_hits += other.verify_hits
        self.verify_weight += other.verify_weight
        self.usage = self.usage + other.usage


def query_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(iteration, index)))


def _query_work(params: PolicyParams, env: AgentEnv, config: TrainConfig, iteration: int, index: int):
    rng = query_rng(config.seed, iteration, index)
    query = env.sample_query(rng, query_id=index)
    tree = build_tree(params, env, query, config.group_size, config.horizon, rng, config.temperature)
    compute_advantages(tree, config.gamma)
    grad = query_gradient(params, tree, env, config.scaling)
    return grad, TreeStats.of(tree, env.K), tree.invocations


def _chunk_work(weights, layout, env, config, iteration, indices):
    params = PolicyParams(layout, weights)
    return [_query_work(params, env, config, iteration, i) for i in indices]


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("CRITROUTER_THREADS", "1")))
    except ValueError:
        return 1


def batch_gradient(
    params: PolicyParams,
    env: AgentEnv,
    config: TrainConfig,
    iteration: int,
    order: Optional[Sequence[int]] = None,
    pool: Optional[ProcessPoolExecutor] = None,
):
    """Mean query gradient over the batch, folded in ``order`` (default 0..n-1)."""
    indices = list(range(config.batch_size)) if order is None else list(order)
    if pool is None:
        results = [_query_work(params, env, config, iteration, i) for i in indices]
    else:
        n = pool._max_workers
        chunks = [indices[j::n] for j in range(n)]
        futures = [pool.submit(_chunk_work, params.weights, params.layout, env, config, iteration, c) for c in chunks]
        by_index = {}
        for c, fut in zip(chunks, futures):
            by_index.update(zip(c, fut.result()))
        results = [by_index[i] for i in indices]
    grad = np.zeros_like(params.weights)
    stats = TreeStats(usage=np.zeros(env.K))
    counts = np.zeros(env.K, dtype=np.int64)
    for g, st, inv in results:
        grad += g
        stats.add(st)
        counts += inv
    grad /= len(indices)
    return grad, stats, counts


def train(
    config: TrainConfig,
    env: AgentEnv,
    initial_params: Optional[PolicyParams] = None,
    callback: Optional[Callable[[int, PolicyParams], None]] = None,
):
    """Run ``config.iterations`` ascent steps; returns ``(params, records)``."""
    if config.xi is not None:
        env = env.with_xi(config.xi)
    else:
        env = env.fresh()
    if env.horizon != config.horizon:
        env = env.with_horizon(config.horizon)
    params = initial_params if initial_params is not None else PolicyParams.zeros(env, config.bins, config.horizon)
    records = []
    n_workers = worker_count()
    pool = ProcessPoolExecutor(n_workers) if n_workers > 1 else None
    try:
        for it in range(1, config.iterations + 1):
            grad, st, counts = batch_gradient(params, env, config, it, pool=pool)
            env.merge_counters(counts)
            n = config.batch_size
            gnorm = float(np.linalg.norm(grad))
            rec = TrainRecord(
                iteration=it,
                reward_mod=st.reward_mod / n,
                reward_raw=st.reward_raw / n,
                route_acc=st.route_hits / st.route_weight if st.route_weight else 0.0,
                verify_acc=st.verify_hits / st.verify_weight if st.verify_weight else 0.0,
                usage=tuple(float(u) for u in st.usage / n),
                grad_norm=gnorm,
            )
            if not np.all(np.isfinite(grad)):
                rec.grad_norm = math.nan
                raise NumericalError(f"non-finite gradient at iteration {it}", rec, records + [rec])
            records.append(rec)
            with np.errstate(over="ignore", invalid="ignore"):
                new = params.weights + config.learning_rate * grad
            if not np.all(np.isfinite(new)):
                raise NumericalError(f"non-finite weights after iteration {it}", rec, records)
            params = PolicyParams(params.layout, new)
            if callback is not None and config.eval_every and it % config.eval_every == 0:
                callback(it, params)
            if it % 50 == 0:
                log.info("iter %d reward_mod=%.4f usage=%s", it, rec.reward_mod, rec.usage)
    finally:
        if pool is not None:
            pool.shutdown()
    return params, records


# -- estimator bias ---------------------------------------------------------------


@dataclass
class BiasCheck:
    group_size: int
    estimate: np.ndarray  # Monte Carlo mean of the uncorrected estimator
    exact: np.ndarray
    stderr: np.ndarray
    n_samples: int

    @property
    def corrected(self) -> np.ndarray:
        G = self.group_size
        return self.estimate * G / (G - 1)

    def mask(self, floor: float = 1e-3) -> np.ndarray:
        return np.abs(self.exact) > floor

    def ratio(self, corrected: bool = False, floor: float = 1e-3) -> np.ndarray:
        est = self.corrected if corrected else self.estimate
        m = self.mask(floor)
        return est[m] / self.exact[m]

    def max_relative_error(self, corrected: bool = False, floor: float = 1e-3) -> float:
        target = 1.0 if corrected else (self.group_size - 1) / self.group_size
        return float(np.max(np.abs(self.ratio(corrected, floor) / target - 1.0)))


def tiny_env(horizon: int = 2) -> AgentEnv:
    """Two agents, two difficulty classes, no observation noise; small
    enough to enumerate exactly."""
    agents = (
        AgentProfile(1, "strong", {"easy": 0.9, "medium": 0.8, "hard": 0.7}, 0.0, 1, 0.5, 0.2),
        AgentProfile(2, "weak", {"easy": 0.8, "medium": 0.3, "hard": 0.1}, 0.2, 2, 1.0, 0.0),
    )
    return AgentEnv(agents, difficulty_weights=(0.5, 0.0, 0.5), flip_prob=0.0, horizon=horizon)


def random_params(env: AgentEnv, rng, scale: float = 1.0, bins: int = 2, horizon: Optional[int] = None) -> PolicyParams:
    p = PolicyParams.zeros(env, bins, horizon)
    return PolicyParams(p.layout, rng.normal(0.0, scale, p.weights.shape))


def estimator_bias_check(
    env: AgentEnv,
    params: PolicyParams,
    G: int,
    n_samples: int,
    seed: int = 0,
    horizon: Optional[int] = None,
    n_batches: int = 20,
) -> BiasCheck:
    """Compare the Monte Carlo mean of the tree estimator against the exact
    policy gradient.  Nodes are weighted by their reach probability under
    uniform branch choice, i.e. each tree is read as ``G**(t-1)`` on-policy
    trajectories at turn ``t``; the group baseline then shrinks the mean by
    ``(G-1)/G``.
    """
    T = horizon or env.horizon
    _, exact = exact_objective(params, env, T, gamma=1.0)
    batch_sums = []
    per_batch = -(-n_samples // n_batches)
    done = 0
    for b in range(n_batches):
        acc = {}
        for i in range(done, min(done + per_batch, n_samples)):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(G, i)))
            query = env.sample_query(rng, query_id=i)
            tree = build_tree(params, env, query, G, T, rng)
            compute_advantages(tree, 1.0)
            for key, legal, active, coeff in node_terms(params, tree, env, "path"):
                slot = acc.get(key)
                if slot is None:
                    acc[key] = [legal, active, coeff]
                else:
                    slot[2] = slot[2] + coeff
        count = min(done + per_batch, n_samples) - done
        done += count
        g = np.zeros_like(params.weights)
        for legal, active, coeff in acc.values():
            g[np.ix_(legal, active)] += coeff[:, None]
        batch_sums.append((g, count))
    total = sum(g for g, _ in batch_sums)
    mean = total / n_samples
    means = np.array([g / c for g, c in batch_sums if c > 0])
    stderr = means.std(axis=0, ddof=1) / math.sqrt(len(means)) if len(means) > 1 else np.full_like(mean, np.nan)
    return BiasCheck(G, mean, exact, stderr, n_samples)


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["xi"] = list(config.xi) if config.xi is not None else None
    return d
