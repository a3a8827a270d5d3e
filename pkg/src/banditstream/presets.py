"""Shipped experiment configurations, in the same dict form as a config file.

Run counts are reduced to desk scale where the original protocol averages
100 or more runs; each such preset says so in its ``note``.
"""
from __future__ import annotations

import copy
import math

from .policies.stochastic import discount_for_changes, window_for_changes

STATIONARY_BASELINES = [{"name": "UCB"}, {"name": "UCBV"}, {"name": "MOSS"}]

PRESETS = {
    "stationary_topic": {
        "experiment": {"name": "stationary_topic", "T": 20000, "k": 1, "n_runs": 50, "base_seed": 1,
                       "note": "binary-activity rewards: 1 if the arm publishes, 0 otherwise"},
        "env": {"kind": "StationaryBernoulli", "K": 10,
                "means": [0.95, 0.85, 0.75, 0.65, 0.55, 0.45, 0.35, 0.25, 0.15, 0.05]},
        "policies": [{"name": "Random"}, {"name": "UCB"}, {"name": "CUCBV"}, {"name": "MOSS"},
                     {"name": "TS-Bernoulli"}, {"name": "UCBV"}, {"name": "UCB-delta"}],
    },
    "samplin_xp": {
        "experiment": {"name": "samplin_xp", "T": 1000, "k": 1, "n_runs": 50, "base_seed": 2},
        "env": {"kind": "LinearProfile", "K": 50, "d": 5, "L": 1.0, "S_bound": 1.0,
                "sigma_profile": 0.1, "R_noise": math.sqrt(0.1)},
        "policies": [
            {"name": "SampLinUCB", "obs": "p=1", "R": math.sqrt(0.1)},
            {"name": "SampLinUCB", "obs": "p=0.5", "R": math.sqrt(0.1)},
            {"name": "SampLinUCB", "obs": "p=0.05", "R": math.sqrt(0.1)},
            {"name": "SampLinUCB", "obs": "last_selected", "R": math.sqrt(0.1)},
        ] + STATIONARY_BASELINES,
    },
    "hidden_xp": {
        "experiment": {"name": "hidden_xp", "T": 2000, "k": 5, "n_runs": 20, "base_seed": 3,
                       "note": "T scaled from 5000 to 2000"},
        "env": {"kind": "VariableContext", "K": 50, "d": 10, "a0": 2.0, "b0": 1.0},
        "policies": [
            {"name": "HiddenLinUCB"},
            {"name": "HiddenLinUCB", "obs": "last_selected"},
            {"name": "HiddenLinUCB", "obs": "p=0.1"},
        ] + STATIONARY_BASELINES + [{"name": "TS-Gaussian"}],
    },
    "rrts_xp1": {
        "experiment": {"name": "rrts_xp1", "T": 1000, "k": 5, "n_runs": 20, "base_seed": 4,
                       "note": "n_runs reduced from 100 to 20"},
        "env": {"kind": "RecurrentVAR", "K": 30, "sigma": 1.0, "alpha_prior": 1.0, "mu_prior": 0.0},
        "policies": [
            {"name": "Oracle"},
            {"name": "ContextualTS-full"},
            {"name": "RecurrentRelationalTS", "window": 200, "nbIt": 10},
            {"name": "UCB"}, {"name": "UCBV"}, {"name": "TS-Gaussian"},
            {"name": "Discounted-UCB", "gamma": discount_for_changes(1000, 1000)},
            {"name": "SW-UCB", "tau": window_for_changes(1000, 1000)},
            {"name": "Random"},
        ],
    },
    "rsts_xp2": {
        "experiment": {"name": "rsts_xp2", "T": 10000, "k": 50, "n_runs": 20, "base_seed": 5,
                       "note": "n_runs reduced from 100 to 20"},
        "env": {"kind": "RecurrentVAR", "K": 200, "sigma": 1.0, "alpha_prior": 1.0, "mu_prior": 0.0},
        "policies": [
            {"name": "Oracle"},
            {"name": "RecurrentStateTS", "d": 4, "window": 200},
            {"name": "UCB"}, {"name": "UCBV"}, {"name": "TS-Gaussian"},
            {"name": "Discounted-UCB", "gamma": discount_for_changes(10000, 10000)},
            {"name": "SW-UCB", "tau": window_for_changes(10000, 10000)},
            {"name": "Random"},
        ],
    },
    "periodic": {
        "experiment": {"name": "periodic", "T": 3000, "k": 15, "n_runs": 10, "base_seed": 6,
                       "note": "scaled from K=200, T=10000, k=50, 100 runs"},
        "env": {"kind": "Periodic", "K": 60, "cycles": 30, "cycle_len": 100, "n_periods": 4,
                "period_len": 25},
        "policies": [
            {"name": "RecurrentStateTS", "d": 4, "sigma": 0.5, "label": "RecurrentStateTS-d4"},
            {"name": "RecurrentStateTS", "d": 2, "sigma": 0.5, "label": "RecurrentStateTS-d2"},
            {"name": "RecurrentStateTS", "d": 1, "sigma": 0.5, "label": "RecurrentStateTS-d1"},
            {"name": "UCB"}, {"name": "UCBV"}, {"name": "TS-Gaussian"},
            {"name": "Discounted-UCB", "gamma": 0.96},
            {"name": "SW-UCB", "tau": 200},
            {"name": "Oracle"},
        ],
    },
    "periodic_random": {
        "experiment": {"name": "periodic_random", "T": 3000, "k": 15, "n_runs": 10, "base_seed": 7,
                       "note": "scaled from K=200, T=10000, k=50, 100 runs"},
        "env": {"kind": "PeriodicRandom", "K": 60},
        "policies": [
            {"name": "RecurrentStateTS", "d": 10, "sigma": 0.5, "label": "RecurrentStateTS-d10"},
            {"name": "RecurrentStateTS", "d": 4, "sigma": 0.5, "label": "RecurrentStateTS-d4"},
            {"name": "UCB"}, {"name": "UCBV"}, {"name": "TS-Gaussian"},
            {"name": "SW-UCB", "tau": 200},
            {"name": "Oracle"},
        ],
    },
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
