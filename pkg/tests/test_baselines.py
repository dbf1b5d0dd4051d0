import numpy as np
import pytest

from critrouter.baselines import (
    FixedAgentRouter,
    OneShotRouter,
    OracleRouter,
    RandomRouter,
    make_baseline,
    oracle_choice,
)
from critrouter.env import DIFFICULTIES, AgentEnv, AgentProfile, ConfigError, default_env
from critrouter.evaluation import evaluate

ENV = default_env()
N = 30000


@pytest.fixture(scope="module")
def one_shot():
    return OneShotRouter.fit(ENV, seed=0)


def test_random_router_shares():
    res = evaluate(RandomRouter(), ENV, N, seed=0)
    assert np.all(np.abs(res.usage.shares - 1 / 3) <= 0.01)


def test_random_router_accuracy_is_the_mixture_mean():
    res = evaluate(RandomRouter(), ENV, N, seed=1)
    assert abs(res.accuracy - (0.859 + 0.517 + 0.345) / 3) <= 0.02


def test_single_agent_pool():
    a = AgentProfile(1, "solo", dict(zip(DIFFICULTIES, (0.5, 0.5, 0.5))))
    env = AgentEnv((a,))
    res = evaluate(RandomRouter(), env, 200)
    assert res.usage.counts.tolist() == [200]


@pytest.mark.parametrize("k,acc", [(1, 0.859), (3, 0.345)])
def test_fixed_agent_accuracy(k, acc):
    res = evaluate(FixedAgentRouter(k), ENV, N, seed=2)
    assert abs(res.accuracy - acc) <= 0.01
    assert res.usage.shares[k - 1] == 1.0


def test_oracle_threshold_rule():
    assert oracle_choice(ENV, 0) == ENV.weakest
    assert oracle_choice(ENV, 1) == 2
    assert oracle_choice(ENV, 2) == ENV.strongest


def test_oracle_beats_every_fixed_agent():
    oracle = evaluate(OracleRouter(), ENV, N, seed=3).accuracy
    for k in (1, 2, 3):
        assert oracle >= evaluate(FixedAgentRouter(k), ENV, N, seed=3).accuracy


def test_baselines_accept_after_one_call():
    for router in (RandomRouter(), FixedAgentRouter(2), OracleRouter()):
        res = evaluate(router, ENV, 500)
        assert res.usage.total == 500
        assert res.termination_histogram[1] == 500


def test_one_shot_noiseless_is_diagonal():
    env = default_env(flip_prob=0.0)
    router = OneShotRouter.fit(env, seed=0)
    m = evaluate(router, env, 3000).routing_confusion().counts
    assert np.count_nonzero(m - np.diag(np.diag(m))) == 0


def test_one_shot_noise_structure(one_shot):
    m = evaluate(one_shot, ENV, 20000).routing_confusion().counts
    off = m.sum() - np.trace(m)
    assert off > 0
    # each off-diagonal cell holds about flip/2 of its row
    rows = m / m.sum(axis=1, keepdims=True)
    for i in range(3):
        for j in range(3):
            if i != j:
                assert abs(rows[i, j] - 0.075) < 0.015


def test_make_baseline():
    assert isinstance(make_baseline("random", ENV), RandomRouter)
    assert make_baseline("fixed:2", ENV).agent_id == 2
    for bad in ("fixed:9", "fixed:x", "nope"):
        with pytest.raises(ConfigError):
            make_baseline(bad, ENV)
