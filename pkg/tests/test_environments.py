import math

import numpy as np
import pytest

from banditstream.core import BERNOULLI, ObservationProcess
from banditstream.environments import (MalformedTrace, MissingRound, PeriodicEnv, RewardWeights, StationaryEnv,
                                       bernoulli_gap_means, gen_linear_profile, gen_periodic, gen_periodic_random,
                                       gen_recurrent_var, gen_stationary, gen_variable_context, period_of,
                                       read_trace, trace_replay)
from banditstream.numerics import InvalidParameter, make_rng
from banditstream.policies.recurrent import spectral_check


def rewards_of(env, T, picks, seed=0):
    """Realized rewards when the given arms are picked, on a fixed stream."""
    env.reset(make_rng(seed, 1), make_rng(seed, 3))
    out = []
    prev = ()
    for t in range(1, T + 1):
        env.begin_round(t)
        env.observe(t, prev)
        res = env.step(t, picks[t - 1])
        out.append([res.rewards[a] for a in picks[t - 1]])
        env.end_round(t)
        prev = picks[t - 1]
    return np.array(out)


# ---------------------------------------------------------------- generators

def test_gen_stationary():
    env = gen_stationary(np.random.default_rng(0), means=[0.1, 0.5])
    assert env.K == 2 and env.kind == "StationaryGaussian"
    env = gen_stationary(np.random.default_rng(0), K=4, dist="bernoulli")
    assert env.K == 4 and env.kind == "StationaryBernoulli" and np.all((env.means >= 0) & (env.means <= 1))
    with pytest.raises(InvalidParameter):
        gen_stationary(np.random.default_rng(0))
    with pytest.raises(InvalidParameter):
        gen_stationary(np.random.default_rng(0), K=3, means=[0.1, 0.2])
    with pytest.raises(InvalidParameter):
        StationaryEnv([1.5], "bernoulli")
    assert np.allclose(bernoulli_gap_means(4, 0.9, 0.1), [0.9, 0.8, 0.7, 0.6])


def test_stationary_rewards_have_the_right_law():
    env = StationaryEnv([0.2, 0.7], "bernoulli")
    r = rewards_of(env, 20_000, [(0, 1)] * 20_000)
    assert set(np.unique(r)) <= {0.0, 1.0}
    assert np.allclose(r.mean(axis=0), [0.2, 0.7], atol=0.015)
    env = StationaryEnv([1.0, -1.0], sigma=0.5)
    r = rewards_of(env, 20_000, [(0, 1)] * 20_000)
    assert np.allclose(r.mean(axis=0), [1.0, -1.0], atol=0.02)
    assert np.allclose(r.std(axis=0), 0.5, atol=0.02)
    assert env.oracle_value(1, 1) == 1.0 and env.oracle_value(1, 2) == 0.0


def test_linear_profile_env():
    rng = np.random.default_rng(0)
    env = gen_linear_profile(rng, K=20, d=4, L=1.0, S_bound=1.0)
    assert np.all(np.abs(env.profiles) <= 0.5) and np.all(np.abs(env.beta) <= 0.5)
    assert np.allclose(env.expected(1), env.profiles @ env.beta)
    env.reset(make_rng(0, 1), make_rng(0, 3))
    env.begin_round(1)
    seen = env.observe(1, ())
    assert set(seen) == set(range(20))
    for i, x in seen.items():
        assert np.all(np.abs(x) <= 0.5 + 1e-12)
    with pytest.raises(InvalidParameter):
        gen_linear_profile(rng, d=0)


def test_variable_context_env_rewards_follow_contexts():
    rng = np.random.default_rng(1)
    env = gen_variable_context(rng, K=6, d=3)
    env.reset(make_rng(0, 1))
    env.begin_round(1)
    X = np.array([env.context(1, i) for i in range(6)])
    assert np.allclose(env.expected(1), X @ env.beta)
    env = gen_variable_context(rng, K=6, d=3, activity_periods=4, steps_per_period=5)
    assert env.activity.shape == (6, 4)


def test_recurrent_var_env_is_stable_and_reveals_all():
    env = gen_recurrent_var(np.random.default_rng(2), K=10)
    assert spectral_check(env.theta[:, :10])
    assert env.n_rescales > 0
    env.reset(make_rng(0, 1))
    prev = None
    for t in range(1, 200):
        env.begin_round(t)
        if prev is not None:
            assert np.allclose(env.expected(t), env.theta @ np.append(prev, 1.0))
        prev = env.realized(t).copy()
        env.end_round(t)
    assert np.all(np.isfinite(prev)) and np.abs(prev).max() < 1e3


def test_periodic_activity():
    assert [period_of(t, 100, 25) for t in (1, 25, 26, 100, 101)] == [1, 1, 2, 4, 1]
    env = PeriodicEnv([0.5, 0.8], 25, 4, [1, 3], noise=0.1)
    env.reset(make_rng(0, 1))
    env.begin_round(30)
    assert list(env.active(30)) == [False, False]
    assert env.realized(30)[0] == 0.0
    env.begin_round(60)
    assert list(env.active(60)) == [False, True]
    assert env.expected(60)[1] == 0.8
    with pytest.raises(InvalidParameter):
        gen_periodic(np.random.default_rng(0), cycle_len=90)
    rnd = gen_periodic_random(np.random.default_rng(0), K=50)
    assert np.all(rnd.active_period >= 1) and np.all(rnd.active_period <= rnd.n_periods)
    assert set(rnd.period_len) <= {10, 20, 30, 40}


# ---------------------------------------------------------------- common random numbers

@pytest.mark.parametrize("make", [
    lambda: gen_stationary(np.random.default_rng(0), K=6),
    lambda: gen_linear_profile(np.random.default_rng(0), K=6, d=3),
    lambda: gen_variable_context(np.random.default_rng(0), K=6, d=3),
    lambda: gen_recurrent_var(np.random.default_rng(0), K=6),
    lambda: gen_periodic(np.random.default_rng(0), K=6, cycle_len=8, period_len=2),
])
def test_reward_stream_ignores_policy_and_observation(make):
    T = 60
    rng = np.random.default_rng(9)
    picks_a = [tuple(rng.choice(6, 2, replace=False)) for _ in range(T)]
    picks_b = [tuple(rng.choice(6, 2, replace=False)) for _ in range(T)]
    full_a, full_b = [], []
    for picks, sink, obs in ((picks_a, full_a, ObservationProcess()),
                             (picks_b, full_b, ObservationProcess(BERNOULLI, 0.3))):
        env = make()
        env.obs = obs
        env.reset(make_rng(0, 1), make_rng(0, 3))
        prev = ()
        for t in range(1, T + 1):
            env.begin_round(t)
            env.observe(t, prev)
            env.step(t, picks[t - 1])
            sink.append(env.realized(t).copy())
            env.end_round(t)
            prev = picks[t - 1]
    assert np.array_equal(np.array(full_a), np.array(full_b))


def test_manifest_and_truth_dump():
    env = gen_linear_profile(np.random.default_rng(0), K=3, d=2)
    m = env.manifest()
    assert m["kind"] == "LinearProfile" and m["K"] == 3 and "truth" not in m
    assert np.allclose(env.manifest(True)["truth"]["beta"], env.beta)


# ---------------------------------------------------------------- trace replay

def write(tmp_path, text):
    p = tmp_path / "trace.csv"
    p.write_text(text)
    return p


def test_trace_replay_rewards_and_purity(tmp_path):
    p = write(tmp_path, "t,arm,c0,c1,c2,c3,c4\n1,0,1,0,0,0,0\n1,2,0,0,0,3,1\n2,1,5,0,0,0,0\n")
    env = trace_replay(p, K=3, T=2)
    assert np.allclose(env.expected(1), [math.tanh(0.1), 0.0, math.tanh(0.4)])
    assert np.allclose(env.expected(2), [0.0, math.tanh(0.5), 0.0])
    env.reset(make_rng(0, 1))
    env.begin_round(1)
    res = env.step(1, [1])
    assert res.oracle_value == math.tanh(0.4) and res.selected_value == 0.0
    assert np.array_equal(trace_replay(p, K=3, T=2).rewards_table, env.rewards_table)
    with pytest.raises(MissingRound):
        env.expected(3)
    custom = trace_replay(p, RewardWeights((1.0, 0, 0, 0, 0)), K=3, T=2)
    assert math.isclose(custom.expected(2)[1], math.tanh(5.0))


@pytest.mark.parametrize("text", [
    "t,arm,a,b,c,d,e\n",
    "t,arm,c0,c1,c2,c3,c4\n1,0,1,0,0\n",
    "t,arm,c0,c1,c2,c3,c4\n2,0,1,0,0,0,0\n1,0,1,0,0,0,0\n",
    "t,arm,c0,c1,c2,c3,c4\n1,0,-1,0,0,0,0\n",
    "t,arm,c0,c1,c2,c3,c4\n1,7,1,0,0,0,0\n",
    "t,arm,c0,c1,c2,c3,c4\n1,0,x,0,0,0,0\n",
    "",
])
def test_trace_malformed(tmp_path, text):
    with pytest.raises(MalformedTrace):
        read_trace(write(tmp_path, text), K=3, T=2)


def test_trace_new_arm_cap(tmp_path):
    p = write(tmp_path, "t,arm,c0,c1,c2,c3,c4\n1,0,1,0,0,0,0\n1,1,1,0,0,0,0\n1,2,1,0,0,0,0\n2,2,1,0,0,0,0\n")
    env = trace_replay(p, K=3, T=2, max_new=2)
    env.reset(make_rng(0, 1))
    assert list(env.known_arms(1)) == [0, 1]
    assert list(env.known_arms(2)) == [0, 1, 2]
    with pytest.raises(InvalidParameter):
        RewardWeights((1.0, 2.0))
