import json

import numpy as np
import pytest

from banditstream.harness import (ConfigError, LengthMismatch, RunResult, aggregate, config_from_dict,
                                  config_to_dict, emit, gap_se, pseudo_regret, read_final_csv, read_results_csv,
                                  run_cell, run_episode, run_experiment, run_lockstep, stationary_regret,
                                  sweep_cells)
from banditstream.environments import StationaryEnv
from banditstream.policies import REGISTRY
from banditstream.policies.stochastic import UCB
from banditstream.presets import PRESETS, preset
from banditstream.cli import check_config

# Gaussian rewards overshoot the bounded-reward policies' assumed range on purpose
pytestmark = pytest.mark.filterwarnings("ignore:.*above the assumed bound")

BATCHABLE = [n for n, c in REGISTRY.items() if getattr(c, "batch_mode", None)]


def small(kind="StationaryBernoulli", T=200, k=1, n_runs=3, policies=None, **env):
    env = env or {"K": 6}
    return {
        "experiment": {"T": T, "k": k, "n_runs": n_runs, "base_seed": 11},
        "env": {"kind": kind, **env},
        "policies": policies or [{"name": "UCB"}, {"name": "MOSS"}],
    }


# ---------------------------------------------------------------- lockstep runner

@pytest.mark.parametrize("kind", ["StationaryBernoulli", "StationaryGaussian"])
@pytest.mark.parametrize("k", [1, 3])
def test_lockstep_equals_cell_by_cell(kind, k):
    names = [n for n in BATCHABLE if kind == "StationaryGaussian" or n != "TS-Gaussian"]
    names = [n for n in names if kind == "StationaryBernoulli" or n != "TS-Bernoulli"]
    cfg = config_from_dict(small(kind, T=300, k=k, policies=[{"name": n} for n in names]))
    for p in range(len(cfg.policies)):
        lock = run_lockstep(cfg, p, [0, 1, 2])
        cells = [run_cell(cfg, p, r) for r in (0, 1, 2)]
        for a, b in zip(lock, cells):
            assert np.array_equal(a.cum_reward, b.cum_reward), names[p]
            assert np.array_equal(a.cum_regret, b.cum_regret), names[p]
            assert np.array_equal(a.n_selected, b.n_selected), names[p]


def test_lockstep_crosses_reward_blocks():
    cfg = config_from_dict(small("StationaryBernoulli", T=2100, policies=[{"name": "UCB"}]))
    lock = run_lockstep(cfg, 0, [0, 1])
    cells = [run_cell(cfg, 0, r) for r in (0, 1)]
    assert all(np.array_equal(a.cum_reward, b.cum_reward) for a, b in zip(lock, cells))


# ---------------------------------------------------------------- regret accounting

def test_regret_identity_on_stationary_env():
    means = [0.9, 0.5, 0.4, 0.1]
    env = StationaryEnv(means, sigma=0.3)
    res = run_episode(UCB(4, 2), env, 300, 2, seed=5, keep_trajectory=True)
    assert np.allclose(pseudo_regret(res.trajectory), res.cum_regret)
    assert np.isclose(res.cum_regret[-1], stationary_regret(means, res.n_selected, 2))
    assert np.all(np.diff(res.cum_regret) >= -1e-12)


def test_same_seed_same_rewards_across_policies():
    cfg = config_from_dict(small("StationaryGaussian", policies=[{"name": "Random"}, {"name": "UCB"}]))
    a, b = run_cell(cfg, 0, 1, True), run_cell(cfg, 1, 1, True)
    oa = np.array(a.trajectory.oracle_values)
    ob = np.array(b.trajectory.oracle_values)
    assert np.array_equal(oa, ob)
    assert not np.array_equal(run_cell(cfg, 0, 0).cum_reward, a.cum_reward)


def test_run_experiment_independent_of_jobs(tmp_path):
    cfg = config_from_dict(small("LinearProfile", T=60, n_runs=3,
                                 policies=[{"name": "LinUCB"}, {"name": "UCB"}], K=8, d=3))
    one = run_experiment(cfg, jobs=1)
    two = run_experiment(cfg, jobs=2)
    emit(one, tmp_path / "a")
    emit(two, tmp_path / "b")
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    assert [(r.policy, r.run) for r in one] == [("LinUCB", 0), ("LinUCB", 1), ("LinUCB", 2),
                                                 ("UCB", 0), ("UCB", 1), ("UCB", 2)]


# ---------------------------------------------------------------- files

def test_results_and_final_round_trip(tmp_path):
    cfg = config_from_dict(small(T=50))
    results = run_experiment(cfg)
    paths = emit(results, tmp_path, cfg)
    back = read_results_csv(paths["results"])
    for a, b in zip(results, back):
        assert (a.policy, a.env, a.run) == (b.policy, b.env, b.run)
        assert np.array_equal(a.cum_reward, b.cum_reward) and np.array_equal(a.cum_regret, b.cum_regret)
    final = read_final_csv(paths["final"])
    aggs = aggregate(results)
    for row in final:
        agg = aggs[(row["policy"], row["env"])]
        assert row["final_regret_mean"] == agg.final_regret_mean
        assert row["final_reward_std"] == agg.final_reward_std
    man = json.loads(paths["manifest"].read_text())
    assert man["base_seed"] == 11 and len(man["run_seeds"]) == 3 and man["env"]["kind"] == "StationaryBernoulli"
    assert "truth" not in man["env"]


# ---------------------------------------------------------------- aggregation

def test_aggregate_and_gap_se():
    mk = lambda pol, run, v: RunResult(pol, "E", run, np.array([0.0, v]), np.array([0.0, 2 * v]),
                                       np.zeros(1, dtype=np.int64))
    aggs = aggregate([mk("a", 0, 1.0), mk("a", 1, 3.0), mk("b", 0, 2.0), mk("b", 1, 2.0)])
    a, b = aggs[("a", "E")], aggs[("b", "E")]
    assert a.final_reward_mean == 2.0 and np.isclose(a.final_reward_std, np.sqrt(2.0))
    assert a.final_regret_mean == 4.0 and a.quantiles("reward") == (1.0, 1.5, 2.0, 2.5, 3.0)
    assert np.isclose(gap_se(a, b, "reward"), 1.0)
    single = aggregate([mk("c", 0, 1.0)])[("c", "E")]
    assert single.final_reward_std == 0.0
    with pytest.raises(LengthMismatch):
        aggregate([mk("a", 0, 1.0), RunResult("a", "E", 1, np.zeros(3), np.zeros(3), np.zeros(1))])


# ---------------------------------------------------------------- configs

@pytest.mark.parametrize("raw", [
    {"env": {"K": 3}, "policies": [{"name": "UCB"}]},
    {"env": {"kind": "Nowhere"}, "policies": [{"name": "UCB"}]},
    {"env": {"kind": "StationaryGaussian", "K": 3, "colour": 1}, "policies": [{"name": "UCB"}]},
    {"env": {"kind": "StationaryGaussian", "K": 3}, "policies": [{"name": "NoSuch"}]},
    {"env": {"kind": "StationaryGaussian", "K": 3}, "policies": [{"name": "UCB", "zz": 1}]},
    {"env": {"kind": "StationaryGaussian", "K": 3}, "policies": []},
    {"experiment": {"k": 4}, "env": {"kind": "StationaryGaussian", "K": 3}, "policies": [{"name": "UCB"}]},
    {"experiment": {"T": 0}, "env": {"kind": "StationaryGaussian", "K": 3}, "policies": [{"name": "UCB"}]},
    {"experiment": {"bogus": 1}, "env": {"kind": "StationaryGaussian", "K": 3}, "policies": [{"name": "UCB"}]},
    {"env": {"kind": "StationaryGaussian", "K": 3}, "obs": "p=2", "policies": [{"name": "UCB"}]},
    {"env": {"kind": "StationaryGaussian", "K": 3}, "policy": {"name": "UCB"}, "policies": []},
    {"extra": 1, "env": {"kind": "StationaryGaussian", "K": 3}, "policies": [{"name": "UCB"}]},
])
def test_config_errors(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_config_round_trip_and_single_policy_table():
    raw = small()
    raw["policies"][0]["obs"] = "p=0.5"
    cfg = config_from_dict(raw)
    again = config_from_dict(config_to_dict(cfg))
    assert config_to_dict(again) == config_to_dict(cfg)
    assert cfg.policies[0].display == "UCB[p=0.5]"
    cfg = config_from_dict({"env": {"kind": "StationaryGaussian", "K": 3}, "policy": {"name": "UCB"}})
    assert [p.name for p in cfg.policies] == ["UCB"]


def test_sweep_cells():
    raw = small()
    cells = sweep_cells(raw, {"experiment.k": [1, 2], "policy.a": [0.5, 1.0]})
    assert [name for name, _ in cells] == ["k=1_a=0.5", "k=1_a=1.0", "k=2_a=0.5", "k=2_a=1.0"]
    _, last = cells[-1]
    assert last["experiment"]["k"] == 2 and all(p["a"] == 1.0 for p in last["policies"])
    assert raw["experiment"]["k"] == 1
    assert sweep_cells(raw, {})[0][0] == ""
    with pytest.raises(ConfigError):
        sweep_cells(raw, {"nosuch.x": [1]})


@pytest.mark.parametrize("name", list(PRESETS))
def test_presets_validate(name):
    check_config(preset(name))


def test_obs_probability_grid():
    raw = small(policies=[{"name": "UCB"}])
    cells = sweep_cells(raw, {"obs.p": [0.0, 0.05, 1.0]})
    labels = [config_from_dict(c).env_label() for _, c in cells]
    assert labels == ["StationaryBernoulli[p=0]", "StationaryBernoulli[p=0.05]", "StationaryBernoulli[p=1]"]
    with pytest.raises(ConfigError):
        config_from_dict({**raw, "obs": {"mode": "all", "p": 0.5}})
