import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critrouter.env import ConfigError, ControllerState, Draft, Query, default_env
from critrouter.policy import (
    FeatureLayout,
    PolicyParams,
    action_distribution,
    action_index,
    full_distribution,
    legal_actions,
    legal_indices,
    load_checkpoint,
    log_prob_grad,
    n_actions,
    sample_action,
    save_checkpoint,
)
from critrouter.reward import ContractError, ControllerAction, Verdict

ENV = default_env()


def state(turn=1, last=None, observed=0, signal=0.7):
    q = Query(0, observed, float(observed))
    if turn == 1:
        return ControllerState(q, 1)
    return ControllerState(q, turn, "subsequent", last, Draft(last, True, signal, turn - 1))


def random_state(rng, env=ENV):
    turn = int(rng.integers(1, env.horizon + 1))
    last = None if turn == 1 else int(rng.integers(1, env.K + 1))
    return state(turn, last, int(rng.integers(3)), float(rng.normal(0.5, 1.0)))


def random_params(rng, scale=1.0, env=ENV):
    p = PolicyParams.zeros(env)
    return PolicyParams(p.layout, rng.normal(0, scale, p.weights.shape))


def test_legal_sets():
    assert len(legal_actions(state(), ENV)) == 3
    assert len(legal_actions(state(2, ENV.weakest), ENV)) == 3
    kinds = {a.kind for a in legal_actions(state(2, ENV.strongest), ENV)}
    assert kinds == {"accept", "reject_stop"}
    # reroutes only go to strictly stronger agents
    for a in legal_actions(state(2, 2), ENV):
        if a.route_to is not None:
            assert ENV.rank(a.route_to) < ENV.rank(2)


def test_action_index_roundtrip():
    K = ENV.K
    for st_ in (state(), state(2, 3), state(3, 1)):
        for a in legal_actions(st_, ENV):
            assert action_index(a, K) in legal_indices(st_, ENV)
    seen = {action_index(a, K) for s in (state(), state(2, 3), state(2, 1)) for a in legal_actions(s, ENV)}
    # nothing is weaker than the weakest agent, so rerouting to it is never legal
    never = action_index(ControllerAction(Verdict.REJECT, ENV.weakest, 2), K)
    assert seen == set(range(n_actions(K))) - {never}


def test_layout_blocks_one_hot():
    lay = FeatureLayout(3, 3, 8)
    assert lay.dim == 3 + 2 + 4 + 3 + 9 + 1
    for s in (state(), state(2, 3, 2, -5.0), state(3, 1, 1, 9.0)):
        phi = lay.encode(s)
        assert phi.sum() == 6
        for name, size in lay.blocks:
            off = lay.offsets[name]
            assert phi[off:off + size].sum() == 1


def test_zero_params_uniform():
    p = PolicyParams.zeros(ENV)
    for s in (state(), state(2, 3), state(2, 1)):
        _, probs = action_distribution(p, s, ENV)
        assert np.allclose(probs, 1 / len(probs))


def test_saturated_logit():
    p = PolicyParams.zeros(ENV)
    w = p.weights.copy()
    w[1, p.layout.offsets["bias"]] = 1000.0
    p = PolicyParams(p.layout, w)
    _, probs = action_distribution(p, state(), ENV)
    assert probs[1] > 1 - 1e-12
    g = log_prob_grad(p, state(), ENV, ControllerAction(None, 2, 1))
    assert np.abs(g).max() < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_distribution_normalised_and_masked(seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng, 3.0)
    s = random_state(rng)
    full = full_distribution(p, s, ENV)
    assert abs(full.sum() - 1.0) <= 1e-12
    mask = np.ones(n_actions(ENV.K), dtype=bool)
    mask[list(legal_indices(s, ENV))] = False
    assert np.all(full[mask] == 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-50, 50))
def test_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    p = random_params(rng)
    s = random_state(rng)
    w = p.weights.copy()
    w[:, p.layout.offsets["bias"]] += c
    a = full_distribution(p, s, ENV)
    b = full_distribution(PolicyParams(p.layout, w), s, ENV)
    assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_expected_score_is_zero(seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng)
    s = random_state(rng)
    actions, probs = action_distribution(p, s, ENV)
    total = sum(pr * log_prob_grad(p, s, ENV, a) for a, pr in zip(actions, probs))
    assert np.abs(total).max() < 1e-12
    # masked rows carry no gradient at all
    illegal = [i for i in range(n_actions(ENV.K)) if i not in legal_indices(s, ENV)]
    assert np.all(log_prob_grad(p, s, ENV, actions[0])[illegal] == 0.0)


def test_uniform_closed_form():
    p = PolicyParams.zeros(ENV)
    s = state()
    g = log_prob_grad(p, s, ENV, ControllerAction(None, 1, 1))
    phi = p.layout.encode(s)
    assert np.allclose(g[0], (1 - 1 / 3) * phi)
    assert np.allclose(g[1], -(1 / 3) * phi)


def test_illegal_action_raises():
    with pytest.raises(ContractError):
        log_prob_grad(PolicyParams.zeros(ENV), state(2, 1), ENV, ControllerAction(Verdict.REJECT, 2, 2))


def test_sampling_frequencies():
    p = PolicyParams.zeros(ENV)
    rng = np.random.default_rng(0)
    draws = [sample_action(p, state(), ENV, rng).route_to for _ in range(30000)]
    freq = np.bincount(draws, minlength=4)[1:] / 30000
    assert np.all(np.abs(freq - 1 / 3) <= 0.01)


def test_greedy_ties_take_lowest_row():
    p = PolicyParams.zeros(ENV)
    rng = np.random.default_rng(0)
    assert {sample_action(p, state(), ENV, rng, temperature=0).route_to for _ in range(20)} == {1}
    assert sample_action(p, state(2, 3), ENV, rng, temperature=0).kind == "accept"


def test_deterministic_distribution_always_sampled():
    p = PolicyParams.zeros(ENV)
    w = p.weights.copy()
    w[2, p.layout.offsets["bias"]] = 800.0
    p = PolicyParams(p.layout, w)
    rng = np.random.default_rng(1)
    assert {sample_action(p, state(), ENV, rng).route_to for _ in range(500)} == {3}


def test_checkpoint_roundtrip(tmp_path):
    p = random_params(np.random.default_rng(3))
    path = tmp_path / "c.bin"
    save_checkpoint(p, path)
    q = load_checkpoint(path, p.layout)
    assert np.array_equal(p.weights, q.weights)


def test_checkpoint_refuses_other_layout(tmp_path):
    p = PolicyParams.zeros(ENV)
    path = tmp_path / "c.bin"
    save_checkpoint(p, path)
    with pytest.raises(ConfigError):
        load_checkpoint(path, FeatureLayout(3, 3, 4))
    with pytest.raises(ConfigError):
        load_checkpoint(path, FeatureLayout(2, 3, 8))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ConfigError):
        load_checkpoint(path, p.layout)


def test_non_finite_weights_rejected():
    p = PolicyParams.zeros(ENV)
    w = p.weights.copy()
    w[0, 0] = np.nan
    with pytest.raises(ConfigError):
        PolicyParams(p.layout, w)
