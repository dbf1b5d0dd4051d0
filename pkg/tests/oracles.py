"""Independent reference computations used by the tests.

None of these call the code paths they check: values come from enumerating
realised paths, log-probabilities from a dense re-implementation of the
masked softmax.
"""

import numpy as np

from critrouter.env import default_env
from critrouter.policy import PolicyParams
from critrouter.rollout import build_tree, tree_rows
from critrouter.trainer import tiny_env


def path_values(tree, gamma):
    """``{prefix: V}`` for every internal node, from the flat edge list.

    V(p) = sum over edges e strictly below p of G**-(d) * gamma**(d-1) * r_e
    with d = depth of e relative to p, i.e. the average discounted return
    over the realised root-to-leaf paths through p.
    """
    G = tree.group_size
    edges = [(tuple(r["prefix"]), r["reward"]) for r in tree_rows(tree)]
    nodes = {e[:-1] for e, _ in edges}
    out = {}
    for p in nodes:
        total = 0.0
        for e, r in edges:
            if len(e) > len(p) and e[: len(p)] == p:
                d = len(e) - len(p)
                total += G ** (-d) * gamma ** (d - 1) * r
        out[p] = total
    return out


def path_q_values(tree, gamma, values):
    out = {}
    for row in tree_rows(tree):
        e = tuple(row["prefix"])
        out[e] = row["reward"] + gamma * values.get(e, 0.0)
    return out


def dense_log_prob(params, state, env, row):
    """log pi(row | state) with an explicit legality rule and dense features."""
    K = env.K
    if state.turn == 1:
        legal = list(range(K))
    else:
        stronger = [k for k in range(1, K + 1) if env.rank(k) < env.rank(state.last_agent)]
        legal = [K] + [K + k for k in stronger] if stronger else [K, 2 * K + 1]
    phi = params.layout.encode(state)
    logits = params.weights @ phi
    z = logits[legal]
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    return logits[row] - lse


def random_tree(seed, max_G=3, max_T=3):
    rng = np.random.default_rng(seed)
    env = default_env() if rng.random() < 0.7 else tiny_env(3)
    G = int(rng.integers(2, max_G + 1))
    T = int(rng.integers(1, max_T + 1))
    gamma = float(rng.choice([1.0, 0.9, 0.5, 0.0]))
    p = PolicyParams.zeros(env, 8, T)
    params = PolicyParams(p.layout, rng.normal(0.0, 1.5, p.weights.shape))
    tree = build_tree(params, env.fresh(), env.sample_query(rng), G, T, rng)
    return tree, gamma, params, env
