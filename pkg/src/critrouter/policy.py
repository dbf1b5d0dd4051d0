"""Linear-softmax controller over a global action vocabulary.

Action rows, for a pool of ``K`` agents::

    0 .. K-1      route to agent k at turn 1
    K             accept the previous draft
    K+1 .. 2K     reject and route to agent k
    2K+1          reject and stop (offered only after the strongest agent)

Features are concatenated one-hot blocks, so a state is represented by the
tuple of its active feature indices and ``logit_a = sum(W[a, active])``.
"""

from __future__ import annotations

import bisect
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .env import AgentEnv, ConfigError, ControllerState, SignalModel
from .reward import ContractError, ControllerAction, Verdict


def n_actions(K: int) -> int:
    return 2 * K + 2


def action_index(action: ControllerAction, K: int) -> int:
    if action.verdict is None:
        return action.route_to - 1
    if action.verdict is Verdict.ACCEPT:
        return K
    if action.route_to is None:
        return 2 * K + 1
    return K + action.route_to


def action_from_index(index: int, K: int, turn: int) -> ControllerAction:
    if index < K:
        return ControllerAction(None, index + 1, turn)
    if index == K:
        return ControllerAction(Verdict.ACCEPT, None, turn)
    if index <= 2 * K:
        return ControllerAction(Verdict.REJECT, index - K, turn)
    return ControllerAction(Verdict.REJECT, None, turn)


def legal_rows(turn: int, last_agent: Optional[int], env: AgentEnv) -> tuple:
    K = env.K
    if turn == 1:
        return tuple(range(K))
    if last_agent is None:
        raise ContractError("states after turn 1 must record the last agent")
    stronger = env.stronger_than(last_agent)
    if stronger:
        return (K,) + tuple(K + k for k in sorted(stronger))
    return (K, 2 * K + 1)


def legal_indices(state: ControllerState, env: AgentEnv) -> tuple:
    return legal_rows(state.turn, state.last_agent, env)


def legal_actions(state: ControllerState, env: AgentEnv) -> list:
    return [action_from_index(i, env.K, state.turn) for i in legal_indices(state, env)]


@dataclass(frozen=True)
class FeatureLayout:
    horizon: int
    K: int
    bins: int = 8
    signal: SignalModel = SignalModel()

    def __post_init__(self):
        if self.horizon < 1 or self.K < 1 or self.bins < 1:
            raise ConfigError("feature layout needs T, K, B >= 1")

    @property
    def edges(self) -> tuple:
        lo = self.signal.mu_incorrect - 2 * self.signal.sigma
        hi = self.signal.mu_correct + 2 * self.signal.sigma
        return tuple(float(e) for e in np.linspace(lo, hi, self.bins + 1)[1:-1])

    @property
    def blocks(self) -> tuple:
        # last_agent and quality carry an extra "none" slot for turn 1
        return (
            ("turn", self.horizon),
            ("phase", 2),
            ("last_agent", self.K + 1),
            ("observed_difficulty", 3),
            ("quality", self.bins + 1),
            ("bias", 1),
        )

    @property
    def offsets(self) -> dict:
        out, pos = {}, 0
        for name, size in self.blocks:
            out[name] = pos
            pos += size
        return out

    @property
    def dim(self) -> int:
        return sum(size for _, size in self.blocks)

    def layout_hash(self) -> bytes:
        desc = repr((self.blocks, self.edges, n_actions(self.K)))
        return hashlib.sha256(desc.encode()).digest()

    def quality_bin(self, signal: float) -> int:
        return bisect.bisect_right(self.edges, signal)

    def state_key(self, state: ControllerState) -> tuple:
        """Everything the policy can see, as a small hashable tuple."""
        draft = state.last_draft
        qbin = -1 if draft is None else self.quality_bin(draft.quality_signal)
        return self.make_key(state.turn, state.last_agent, state.query.observed_class, qbin)

    def make_key(self, turn: int, last_agent: Optional[int], observed: int, qbin: int) -> tuple:
        # turns past the layout horizon share its last slot
        return (min(turn, self.horizon), 0 if turn == 1 else 1, last_agent or 0, observed, qbin)

    def active_from_key(self, key: tuple) -> tuple:
        turn, phase, last_agent, observed, qbin = key
        off = self.offsets
        return (
            off["turn"] + turn - 1,
            off["phase"] + phase,
            off["last_agent"] + last_agent,
            off["observed_difficulty"] + observed,
            off["quality"] + qbin + 1,
            off["bias"],
        )

    def encode(self, state: ControllerState) -> np.ndarray:
        phi = np.zeros(self.dim)
        phi[list(self.active_from_key(self.state_key(state)))] = 1.0
        return phi


class PolicyParams:
    """Weight matrix ``(n_actions, dim)`` plus a per-instance cache of action
    distributions.  Treat instances as immutable; :meth:`stepped` returns a
    new one.
    """

    def __init__(self, layout: FeatureLayout, weights: Optional[np.ndarray] = None):
        self.layout = layout
        shape = (n_actions(layout.K), layout.dim)
        if weights is None:
            weights = np.zeros(shape)
        weights = np.array(weights, dtype=float)
        if weights.shape != shape:
            raise ConfigError(f"weights have shape {weights.shape}, layout needs {shape}")
        if not np.all(np.isfinite(weights)):
            raise ConfigError("policy weights must be finite")
        self.weights = weights
        self._cache = {}

    @classmethod
    def zeros(cls, env: AgentEnv, bins: int = 8, horizon: Optional[int] = None) -> "PolicyParams":
        return cls(FeatureLayout(horizon or env.horizon, env.K, bins, env.signal))

    def stepped(self, direction: np.ndarray, lr: float) -> "PolicyParams":
        return PolicyParams(self.layout, self.weights + lr * direction)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.layout, self.weights.copy())

    def lookup(self, state: ControllerState, env: AgentEnv, temperature: float = 1.0):
        """Return ``(key, legal, probs, cumulative, active)`` for a state."""
        return self.lookup_key(self.layout.state_key(state), state.turn, state.last_agent, env, temperature)

    def lookup_key(self, key: tuple, turn: int, last_agent: Optional[int], env: AgentEnv, temperature: float = 1.0):
        ckey = (key, env.by_strength, temperature)
        hit = self._cache.get(ckey)
        if hit is not None:
            return hit
        legal = legal_rows(turn, last_agent, env)
        active = self.layout.active_from_key(key)
        logits = self.weights[np.ix_(legal, active)].sum(axis=1)
        if temperature == 0:
            probs = np.zeros(len(legal))
            probs[int(np.argmax(logits))] = 1.0
        else:
            z = logits / temperature
            z = np.exp(z - z.max())
            probs = z / z.sum()
        cumulative = list(np.cumsum(probs))
        cumulative[-1] = 1.0
        hit = (key, legal, probs, cumulative, active)
        self._cache[ckey] = hit
        return hit


def action_distribution(params: PolicyParams, state: ControllerState, env: AgentEnv):
    """Legal actions of ``state`` and their probabilities."""
    _, legal, probs, _, _ = params.lookup(state, env)
    return [action_from_index(i, env.K, state.turn) for i in legal], probs.copy()


def full_distribution(params: PolicyParams, state: ControllerState, env: AgentEnv) -> np.ndarray:
    """Probabilities over the whole vocabulary, zero on masked rows."""
    _, legal, probs, _, _ = params.lookup(state, env)
    out = np.zeros(n_actions(env.K))
    out[list(legal)] = probs
    return out


def log_prob_grad(
    params: PolicyParams, state: ControllerState, env: AgentEnv, action: ControllerAction
) -> np.ndarray:
    """Gradient of ``log pi(action | state)`` with respect to every weight."""
    _, legal, probs, _, active = params.lookup(state, env)
    idx = action_index(action, env.K)
    if idx not in legal:
        raise ContractError(f"action {action} is not legal in this state")
    coeff = -probs.copy()
    coeff[legal.index(idx)] += 1.0
    grad = np.zeros_like(params.weights)
    grad[np.ix_(legal, active)] = coeff[:, None]
    return grad


def sample_index(params: PolicyParams, state: ControllerState, env: AgentEnv, rng, temperature: float = 1.0):
    """Sample an action row; returns ``(row, lookup)`` so callers can reuse it."""
    hit = params.lookup(state, env, temperature)
    legal, cumulative = hit[1], hit[3]
    if temperature == 0:
        return legal[int(np.argmax(hit[2]))], hit
    return legal[bisect.bisect_right(cumulative, rng.random())], hit


def sample_action(
    params: PolicyParams, state: ControllerState, env: AgentEnv, rng, temperature: float = 1.0
) -> ControllerAction:
    """Categorical draw from the policy; ``temperature=0`` is greedy with
    ties going to the lowest action row.
    """
    row, _ = sample_index(params, state, env, rng, temperature)
    return action_from_index(row, env.K, state.turn)


# -- checkpoints --------------------------------------------------------------

MAGIC = b"CRCP"
VERSION = 1
_HEADER = struct.Struct("<4sHHHHHII32s")


def save_checkpoint(params: PolicyParams, path) -> None:
    lay = params.layout
    rows, cols = params.weights.shape
    header = _HEADER.pack(MAGIC, VERSION, lay.horizon, lay.K, lay.bins, 0, rows, cols, lay.layout_hash())
    body = np.ascontiguousarray(params.weights, dtype="<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_checkpoint(path, layout: FeatureLayout) -> PolicyParams:
    """Load weights saved by :func:`save_checkpoint`; refuses a layout mismatch."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ConfigError(f"{path}: truncated checkpoint")
    magic, version, T, K, B, _, rows, cols, digest = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ConfigError(f"{path}: not a version-{VERSION} policy checkpoint")
    if (T, K, B) != (layout.horizon, layout.K, layout.bins) or digest != layout.layout_hash():
        raise ConfigError(
            f"{path}: feature layout mismatch (checkpoint T={T} K={K} B={B}, "
            f"expected T={layout.horizon} K={layout.K} B={layout.bins})"
        )
    body = data[_HEADER.size:]
    if len(body) != rows * cols * 8:
        raise ConfigError(f"{path}: weight block has wrong length")
    weights = np.frombuffer(body, dtype="<f8").reshape(rows, cols).copy()
    return PolicyParams(layout, weights)
