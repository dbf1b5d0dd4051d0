"""Exhaustive expectation over queries, controller actions and agent outcomes.

Serves as the ground truth for the expected modified return ``J(theta)`` and
its policy gradient.  Quality signals enter only through their bin, so the
expectation is a finite sum with bin probabilities from the Gaussian CDF.
Practical for small pools and horizons; the recursion is memoised on the
full latent state.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from .env import DIFFICULTIES, AgentEnv
from .policy import PolicyParams, action_from_index
from .reward import Verdict, composite_reward


def bin_probabilities(params: PolicyParams, env: AgentEnv) -> dict:
    """``{correct: array of P(bin | correct)}`` for the layout's quality bins."""
    edges = np.array(params.layout.edges)
    out = {}
    for correct in (False, True):
        mu = env.signal.mu_correct if correct else env.signal.mu_incorrect
        sigma = env.signal.sigma
        if sigma == 0:
            p = np.zeros(len(edges) + 1)
            p[params.layout.quality_bin(mu)] = 1.0
        else:
            cdf = np.concatenate([[0.0], norm.cdf((edges - mu) / sigma), [1.0]])
            p = np.diff(cdf)
        out[correct] = p
    return out


def observation_probabilities(env: AgentEnv, difficulty: int) -> np.ndarray:
    n = len(DIFFICULTIES)
    p = np.full(n, env.flip_prob / (n - 1))
    p[difficulty] = 1.0 - env.flip_prob
    return p


class ExactEvaluator:
    """Exact ``J`` and ``grad J`` for a stochastic policy on ``env``."""

    def __init__(self, params: PolicyParams, env: AgentEnv, horizon: int, gamma: float = 1.0):
        self.params = params
        self.env = env
        self.horizon = horizon
        self.gamma = gamma
        self.bins = bin_probabilities(params, env)
        self._memo = {}
        self._q = {}

    def _value(self, difficulty, observed, turn, last_agent, last_correct, qbin):
        memo_key = (difficulty, observed, turn, last_agent, last_correct, qbin)
        hit = self._memo.get(memo_key)
        if hit is not None:
            return hit
        env, params, K = self.env, self.params, self.env.K
        key = params.layout.make_key(turn, last_agent, observed, qbin)
        _, legal, probs, _, active = params.lookup_key(key, turn, last_agent, env)
        grad = np.zeros_like(params.weights)
        q_values = np.zeros(len(legal))
        for j, row in enumerate(legal):
            action = action_from_index(row, K, turn)
            r_verify = 0
            if turn > 1:
                r_verify = int(last_correct) if action.verdict is Verdict.ACCEPT else int(not last_correct)
            if action.route_to is None:
                q_values[j] = composite_reward(0, r_verify)
                continue
            agent = env.agent(action.route_to)
            p = agent.p_correct(difficulty, refined=turn > 1)
            q = 0.0
            for correct, pc in ((True, p), (False, 1.0 - p)):
                if pc == 0.0:
                    continue
                r = composite_reward(int(correct), r_verify) - agent.xi
                if turn >= self.horizon:
                    q += pc * r
                    continue
                for b, pb in enumerate(self.bins[correct]):
                    if pb == 0.0:
                        continue
                    v_next, g_next = self._value(difficulty, observed, turn + 1, action.route_to, correct, b)
                    q += pc * pb * (r + self.gamma * v_next)
                    grad += probs[j] * pc * pb * self.gamma * g_next
            q_values[j] = q
        value = float(probs @ q_values)
        # score-function part: sum_a pi(a) (e_a - pi) Q(a) on the active columns
        coeff = probs * (q_values - value)
        grad[np.ix_(legal, active)] += coeff[:, None]
        self._memo[memo_key] = (value, grad)
        self._q[memo_key] = (legal, probs, q_values)
        return value, grad

    def action_values(self, difficulty, observed, turn, last_agent, last_correct, qbin):
        """``(legal rows, probs, Q)`` at one latent state."""
        self._value(difficulty, observed, turn, last_agent, last_correct, qbin)
        return self._q[(difficulty, observed, turn, last_agent, last_correct, qbin)]

    def objective(self):
        """``(J, grad J)`` averaged over the query distribution."""
        total = 0.0
        grad = np.zeros_like(self.params.weights)
        for d, wd in enumerate(self.env.difficulty_weights):
            if wd == 0:
                continue
            for o, po in enumerate(observation_probabilities(self.env, d)):
                if po == 0:
                    continue
                v, g = self._value(d, o, 1, None, None, -1)
                total += wd * po * v
                grad += wd * po * g
        return total, grad


def exact_objective(params: PolicyParams, env: AgentEnv, horizon: int = None, gamma: float = 1.0):
    return ExactEvaluator(params, env, horizon or env.horizon, gamma).objective()
