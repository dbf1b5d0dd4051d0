"""Multi-turn group rollout trees.

From every live state the controller samples ``G`` actions; each routed
action calls an agent and opens a child state.  Values are filled in bottom
up with ``V(s) = mean_i [r_i + gamma * V(child_i)]`` (zero at terminals) and
each sampled action gets the group-relative advantage ``Q_i - mean_j Q_j``.
There is deliberately no standard-deviation normalisation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .env import AgentEnv, ControllerState, Draft, Query, Terminal
from .policy import PolicyParams, action_from_index, sample_index
from .reward import ContractError, ControllerAction, RewardBreakdown, score_action


@dataclass(eq=False)
class Edge:
    action: ControllerAction
    row: int
    reward: RewardBreakdown
    child: "RolloutNode"
    draft: Optional[Draft] = None
    q_hat: float = math.nan
    advantage: float = math.nan


@dataclass(eq=False)
class RolloutNode:
    prefix: tuple
    state: object  # ControllerState or Terminal
    turn: int
    terminal: bool
    edges: list = field(default_factory=list)
    value_hat: float = 0.0
    lookup: Optional[tuple] = None  # policy (key, legal, probs, cumulative, active)


@dataclass(eq=False)
class RolloutTree:
    query: Query
    root: RolloutNode
    group_size: int
    horizon: int
    levels: list  # levels[t-1] = live prefixes B_t at turn t
    invocations: np.ndarray

    def internal_nodes(self):
        for level in self.levels:
            yield from level

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed([e.child for e in node.edges]))

    @property
    def n_nodes(self) -> int:
        return sum(1 for _ in self.nodes())

    @property
    def surviving_at_horizon(self) -> int:
        """``|B_T|``: live prefixes that reach turn T."""
        return len(self.levels[self.horizon - 1]) if len(self.levels) >= self.horizon else 0


@dataclass(frozen=True)
class AdvantageRecord:
    prefix: tuple
    group_index: int
    q_hat: float
    advantage: float
    state: ControllerState
    action: ControllerAction


def build_tree(
    params: PolicyParams,
    env: AgentEnv,
    query: Query,
    G: int,
    T: int,
    rng: np.random.Generator,
    temperature: float = 1.0,
) -> RolloutTree:
    if G < 2:
        raise ContractError("group size must be at least 2")
    if T < 1:
        raise ContractError("horizon must be at least 1")
    K = env.K
    agents = env.agents
    counts = np.zeros(K, dtype=np.int64)
    root = RolloutNode(prefix=(), state=env.initial_state(query), turn=1, terminal=False)
    levels = []
    frontier = [root]
    for t in range(1, T + 1):
        if not frontier:
            break
        levels.append(frontier)
        nxt = []
        for node in frontier:
            state = node.state
            for i in range(G):
                row, hit = sample_index(params, state, env, rng, temperature)
                node.lookup = hit
                action = action_from_index(row, K, t)
                draft = None
                if action.route_to is not None:
                    draft = env.invoke_agent(action.route_to, state, rng, horizon=T)
                    counts[action.route_to - 1] += 1
                reward = score_action(action, state.last_draft, draft, agents)
                child_state = env.transition(state, action, draft, horizon=T)
                terminal = isinstance(child_state, Terminal)
                child = RolloutNode(node.prefix + (i,), child_state, t + 1, terminal)
                node.edges.append(Edge(action, row, reward, child, draft))
                if not terminal:
                    nxt.append(child)
        frontier = nxt
    return RolloutTree(query, root, G, T, levels, counts)


def backfill_values(tree: RolloutTree, gamma: float = 1.0) -> RolloutTree:
    """Populate ``value_hat`` and each edge's ``q_hat`` bottom up."""
    for level in reversed(tree.levels):
        for node in level:
            total = 0.0
            for edge in node.edges:
                edge.q_hat = edge.reward.modified_composite + gamma * edge.child.value_hat
                total += edge.q_hat
            node.value_hat = total / len(node.edges)
    return tree


def compute_advantages(tree: RolloutTree, gamma: float = 1.0) -> list:
    backfill_values(tree, gamma)
    records = []
    for node in tree.internal_nodes():
        # value_hat is already the group mean of q_hat
        mean_q = sum(e.q_hat for e in node.edges) / len(node.edges)
        for i, edge in enumerate(node.edges):
            edge.advantage = edge.q_hat - mean_q
            records.append(AdvantageRecord(node.prefix, i, edge.q_hat, edge.advantage, node.state, edge.action))
    return records


def tree_rows(tree: RolloutTree) -> list:
    """Flat per-edge rows for debugging dumps."""
    rows = []
    for node in tree.internal_nodes():
        for i, e in enumerate(node.edges):
            rows.append(
                {
                    "prefix": list(node.prefix + (i,)),
                    "turn": node.turn,
                    "action": e.action.kind,
                    "route_to": e.action.route_to,
                    "r_route": e.reward.r_route,
                    "r_verify": e.reward.r_verify,
                    "penalty": e.reward.penalty,
                    "reward": e.reward.modified_composite,
                    "v_hat": node.value_hat,
                    "q_hat": e.q_hat,
                    "advantage": e.advantage,
                }
            )
    return rows


def dump_tree(tree: RolloutTree, path) -> None:
    with open(path, "w") as fh:
        for row in tree_rows(tree):
            fh.write(json.dumps(row) + "\n")
