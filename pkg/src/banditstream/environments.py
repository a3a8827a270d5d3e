"""Synthetic ground-truth environments and a trace-replay environment.

Every environment draws the whole round (noises, activity and any contexts
that drive rewards) in ``begin_round`` from its episode stream, so two
policies run on the same seed see exactly the same rewards (common random
numbers). Profile samples, which never touch rewards, come from the
observation stream and are drawn only for arms that reveal one.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .core import Environment, ObservationProcess, top_k
from .numerics import InvalidParameter, TruncatedGaussian, make_rng
from .policies.recurrent import spectral_check


class MalformedTrace(ValueError):
    pass


class MissingRound(ValueError):
    pass


def _truth(d: dict, dump: bool, **latents) -> dict:
    if dump:
        d["truth"] = {k: np.asarray(v).tolist() for k, v in latents.items()}
    return d


# ---------------------------------------------------------------- stationary

class StationaryEnv(Environment):
    """I.i.d. rewards per arm: Gaussian(μ_i, σ²) or Bernoulli(μ_i)."""
    kind = "StationaryGaussian"

    def __init__(self, means, dist: str = "gaussian", sigma: float = 1.0,
                 obs: Optional[ObservationProcess] = None, seed: int = 0):
        means = np.asarray(means, dtype=float)
        super().__init__(means.size, obs, seed)
        if dist not in ("gaussian", "bernoulli"):
            raise InvalidParameter(f"unknown reward distribution {dist!r}")
        if dist == "bernoulli" and (np.any(means < 0) or np.any(means > 1)):
            raise InvalidParameter("Bernoulli means must lie in [0, 1]")
        self.means = means
        self.dist = dist
        self.sigma = sigma
        self.kind = "StationaryBernoulli" if dist == "bernoulli" else "StationaryGaussian"
        self._r = np.zeros(self.K)
        self._oracle: Dict[int, float] = {}

    def begin_round(self, t):
        super().begin_round(t)
        if self.dist == "bernoulli":
            self._r = (self.rng.random(self.K) < self.means).astype(float)
        else:
            self._r = self.means + self.sigma * self.rng.standard_normal(self.K)

    def expected(self, t):
        return self.means

    def realized(self, t):
        return self._r

    def oracle_value(self, t, k):
        if k not in self._oracle:
            self._oracle[k] = super().oracle_value(t, k)
        return self._oracle[k]

    def manifest(self, dump_truth=False):
        m = super().manifest(dump_truth)
        m.update(dist=self.dist, sigma=self.sigma, means=self.means.tolist())
        return m


def gen_stationary(rng, K: Optional[int] = None, means=None, dist: str = "gaussian", sigma: float = 1.0,
                   obs=None, seed: int = 0) -> StationaryEnv:
    """Fixed ``means`` (K defaults to their count) or K uniform draws."""
    if means is None:
        if K is None:
            raise InvalidParameter("give K or means")
        means = rng.random(K)
    K = len(means) if K is None else K
    means = np.asarray(means, dtype=float)
    if means.size != K:
        raise InvalidParameter(f"got {means.size} means for K={K}")
    return StationaryEnv(means, dist, sigma, obs, seed)


def bernoulli_gap_means(K: int, best: float = 0.9, gap: float = 0.1) -> np.ndarray:
    """Means best, best-gap, ..., clipped into [0.05, 0.95]."""
    return np.clip(best - gap * np.arange(K), 0.05, 0.95)


# ---------------------------------------------------------------- linear profiles

class LinearProfileEnv(Environment):
    """Fixed hidden profiles μ_i seen through symmetric truncated Gaussian
    samples; rewards N(μ_iᵀβ, R²)."""
    kind = "LinearProfile"

    def __init__(self, beta, profiles, L: float, sigma_profile: float, R_noise: float,
                 obs=None, seed: int = 0):
        profiles = np.asarray(profiles, dtype=float)
        super().__init__(profiles.shape[0], obs, seed)
        self.beta = np.asarray(beta, dtype=float)
        self.profiles = profiles
        self.context_dim = profiles.shape[1]
        self.L, self.sigma_profile, self.R_noise = L, sigma_profile, R_noise
        self._mean = profiles @ self.beta
        self._r = np.zeros(self.K)
        self._sampler = TruncatedGaussian(profiles, sigma_profile, L)

    def begin_round(self, t):
        super().begin_round(t)
        self._r = self._mean + self.R_noise * self.rng.standard_normal(self.K)

    def observe(self, t, prev_selected, contexts=True):
        arms = self.obs.observe(self.obs_rng, t, self.K, prev_selected)
        if not contexts:
            return {int(i): None for i in arms}
        X = self._sampler.sample(self.obs_rng, arms)
        return {int(i): x for i, x in zip(arms, X)}

    def context(self, t, arm):
        return self._sampler.sample(self.obs_rng, [arm])[0]

    def expected(self, t):
        return self._mean

    def realized(self, t):
        return self._r

    def manifest(self, dump_truth=False):
        m = super().manifest(dump_truth)
        m.update(d=self.context_dim, L=self.L, sigma_profile=self.sigma_profile, R_noise=self.R_noise)
        return _truth(m, dump_truth, beta=self.beta, profiles=self.profiles)


def gen_linear_profile(rng, K: int = 50, d: int = 5, L: float = 1.0, S_bound: float = 1.0,
                       sigma_profile: float = 0.1, R_noise: float = math.sqrt(0.1),
                       obs=None, seed: int = 0) -> LinearProfileEnv:
    if min(K, d, L, S_bound) <= 0:
        raise InvalidParameter("K, d, L and S_bound must be positive")
    beta = rng.uniform(-S_bound / math.sqrt(d), S_bound / math.sqrt(d), d)
    profiles = rng.uniform(-L / math.sqrt(d), L / math.sqrt(d), (K, d))
    return LinearProfileEnv(beta, profiles, L, sigma_profile, R_noise, obs, seed)


# ---------------------------------------------------------------- variable contexts

class VariableContextEnv(Environment):
    """x_{i,t} ~ N(μ_i, τ_i⁻¹I) for every arm every round, r ~ N(xᵀβ, σ²).

    With ``activity`` set, arm i is active in period j with probability
    p_{i,j}; an inactive arm emits the context 0.
    """
    kind = "VariableContext"

    def __init__(self, beta, mu, tau, noise: float = 1.0, obs=None, seed: int = 0,
                 activity=None, steps_per_period: int = 10):
        mu = np.asarray(mu, dtype=float)
        super().__init__(mu.shape[0], obs, seed)
        self.beta = np.asarray(beta, dtype=float)
        self.mu = mu
        self.tau = np.asarray(tau, dtype=float)
        self.noise = noise
        self.context_dim = mu.shape[1]
        self.activity = None if activity is None else np.asarray(activity, dtype=float)
        self.steps_per_period = steps_per_period
        self._x = np.zeros_like(mu)
        self._r = np.zeros(self.K)

    def begin_round(self, t):
        super().begin_round(t)
        z = self.rng.standard_normal(self.mu.shape)
        self._x = self.mu + z / np.sqrt(self.tau)[:, None]
        if self.activity is not None:
            M = self.activity.shape[1]
            j = ((t - 1) // self.steps_per_period) % M
            active = self.rng.random(self.K) < self.activity[:, j]
            self._x[~active] = 0.0
        self._r = self._x @ self.beta + self.noise * self.rng.standard_normal(self.K)

    def context(self, t, arm):
        return self._x[arm].copy()

    def expected(self, t):
        return self._x @ self.beta

    def realized(self, t):
        return self._r

    def manifest(self, dump_truth=False):
        m = super().manifest(dump_truth)
        m.update(d=self.context_dim, noise=self.noise, activity=self.activity is not None)
        return _truth(m, dump_truth, beta=self.beta, mu=self.mu, tau=self.tau)


def gen_variable_context(rng, K: int = 50, d: int = 10, a0: float = 2.0, b0: float = 1.0,
                         S_bound: float = 1.0, noise: float = 1.0, obs=None, seed: int = 0,
                         activity_periods: int = 0, steps_per_period: int = 10) -> VariableContextEnv:
    if min(K, d, a0, b0) <= 0:
        raise InvalidParameter("K, d, a0 and b0 must be positive")
    beta = rng.uniform(-S_bound / math.sqrt(d), S_bound / math.sqrt(d), d)
    tau = rng.gamma(a0, 1.0 / b0, K)
    mu = rng.standard_normal((K, d)) / np.sqrt(tau)[:, None]
    activity = rng.random((K, activity_periods)) if activity_periods > 0 else None
    return VariableContextEnv(beta, mu, tau, noise, obs, seed, activity, steps_per_period)


# ---------------------------------------------------------------- recurrent VAR(1)

class RecurrentVAREnv(Environment):
    """r_t = Θ(r_{t-1}, 1) + N(0, σ²I), r_1 ~ N(μ, σ²I); every arm's reward is
    realized each round, selected or not."""
    kind = "RecurrentVAR"

    def __init__(self, theta, sigma: float = 1.0, mu_prior=0.0, obs=None, seed: int = 0,
                 n_rescales: int = 0):
        theta = np.asarray(theta, dtype=float)
        super().__init__(theta.shape[0], obs, seed)
        self.theta = theta
        self.sigma = sigma
        self.mu = np.broadcast_to(np.asarray(mu_prior, dtype=float), (self.K,)).copy()
        self.n_rescales = n_rescales
        self._prev = None
        self._mean = self.mu.copy()
        self._r = np.zeros(self.K)

    def reset(self, rng, obs_rng=None):
        super().reset(rng, obs_rng)
        self._prev = None

    def begin_round(self, t):
        super().begin_round(t)
        if self._prev is None:
            self._mean = self.mu.copy()
        else:
            self._mean = self.theta @ np.append(self._prev, 1.0)
        self._r = self._mean + self.sigma * self.rng.standard_normal(self.K)

    def end_round(self, t):
        self._prev = self._r.copy()

    def expected(self, t):
        return self._mean

    def realized(self, t):
        return self._r

    def transition_matrix(self) -> np.ndarray:
        K = self.K
        A = np.zeros((K + 1, K + 1))
        A[:K] = self.theta
        A[K, K] = 1.0
        return A

    def manifest(self, dump_truth=False):
        m = super().manifest(dump_truth)
        m.update(sigma=self.sigma, spectral_rescales=self.n_rescales)
        return _truth(m, dump_truth, theta=self.theta)


def gen_recurrent_var(rng, K: int = 30, sigma: float = 1.0, alpha_prior: float = 1.0,
                      mu_prior=0.0, obs=None, seed: int = 0) -> RecurrentVAREnv:
    """θ_i ~ N(0, α²I) over (R_{t-1}, 1); the arm-to-arm block is shrunk by
    0.95 until its spectral norm is at most 1.

    The bias column is left alone: with a nonzero bias the full transition
    matrix always has spectral norm above 1, while a contracting arm block
    already keeps E[R_t] bounded.
    """
    theta = alpha_prior * rng.standard_normal((K, K + 1))
    n = 0
    while not spectral_check(theta[:, :K]):
        theta[:, :K] *= 0.95
        n += 1
    return RecurrentVAREnv(theta, sigma, mu_prior, obs, seed, n_rescales=n)


# ---------------------------------------------------------------- periodic

class PeriodicEnv(Environment):
    """Arm i is active in one period of its own cycle; active rewards are
    N(μ_i, noise²), inactive rewards are exactly 0."""
    kind = "Periodic"

    def __init__(self, means, period_len, n_periods, active_period, noise: float = 1.0,
                 obs=None, seed: int = 0):
        means = np.asarray(means, dtype=float)
        super().__init__(means.size, obs, seed)
        self.means = means
        self.period_len = np.broadcast_to(np.asarray(period_len, dtype=np.int64), (self.K,)).copy()
        self.n_periods = np.broadcast_to(np.asarray(n_periods, dtype=np.int64), (self.K,)).copy()
        self.active_period = np.asarray(active_period, dtype=np.int64)
        self.noise = noise
        self._r = np.zeros(self.K)

    def period_index(self, t: int) -> np.ndarray:
        """1-based period of each arm's cycle at round t."""
        cycle = self.period_len * self.n_periods
        return ((t - 1) % cycle) // self.period_len + 1

    def active(self, t: int) -> np.ndarray:
        return self.period_index(t) == self.active_period

    def begin_round(self, t):
        super().begin_round(t)
        noise = self.rng.standard_normal(self.K)
        self._r = np.where(self.active(t), self.means + self.noise * noise, 0.0)

    def expected(self, t):
        return np.where(self.active(t), self.means, 0.0)

    def realized(self, t):
        return self._r

    def manifest(self, dump_truth=False):
        m = super().manifest(dump_truth)
        m.update(noise=self.noise)
        return _truth(m, dump_truth, means=self.means, period_len=self.period_len,
                      n_periods=self.n_periods, active_period=self.active_period)


def period_of(t: int, cycle_len: int, period_len: int) -> int:
    return ((t - 1) % cycle_len) // period_len + 1


def gen_periodic(rng, K: int = 200, cycles: int = 100, cycle_len: int = 100, n_periods: int = 4,
                 period_len: int = 25, obs=None, seed: int = 0) -> PeriodicEnv:
    if cycle_len != n_periods * period_len:
        raise InvalidParameter("cycle_len must equal n_periods * period_len")
    means = rng.random(K)
    active = rng.integers(1, n_periods + 1, K)
    env = PeriodicEnv(means, period_len, n_periods, active, obs=obs, seed=seed)
    env.kind = "Periodic"
    env.cycles = cycles
    return env


def gen_periodic_random(rng, K: int = 200, periods=(2, 3, 4, 5), lengths=(10, 20, 30, 40),
                        obs=None, seed: int = 0) -> PeriodicEnv:
    means = rng.random(K)
    n_periods = rng.choice(np.asarray(periods), K)
    period_len = rng.choice(np.asarray(lengths), K)
    active = np.array([rng.integers(1, p + 1) for p in n_periods])
    env = PeriodicEnv(means, period_len, n_periods, active, obs=obs, seed=seed)
    env.kind = "PeriodicRandom"
    return env


# ---------------------------------------------------------------- trace replay

DEFAULT_EVENT_WEIGHTS = (0.1, 0.0, 0.0, 0.1, 0.1)


@dataclass
class RewardWeights:
    """Weights over event kinds (tweet, retweet-out, reply-out, retweet-in, reply-in)."""
    alpha: tuple = DEFAULT_EVENT_WEIGHTS

    def __post_init__(self):
        if len(self.alpha) != 5 or any(a < 0 for a in self.alpha):
            raise InvalidParameter("reward weights must be 5 nonnegative numbers")

    def reward(self, counts) -> np.ndarray:
        return np.tanh(np.asarray(counts, dtype=float) @ np.asarray(self.alpha, dtype=float))


TRACE_HEADER = ["t", "arm", "c0", "c1", "c2", "c3", "c4"]


def read_trace(path, K: int, T: int) -> np.ndarray:
    """Event counts as an array of shape (T, K, 5); absent rows are zeros."""
    counts = np.zeros((T, K, 5))
    seen_t = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRACE_HEADER:
            raise MalformedTrace(f"trace header must be {','.join(TRACE_HEADER)}")
        last_t = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise MalformedTrace(f"line {lineno}: expected 7 fields, got {len(row)}")
            try:
                t, arm = int(row[0]), int(row[1])
                c = [int(v) for v in row[2:]]
            except ValueError:
                raise MalformedTrace(f"line {lineno}: non-integer field") from None
            if t < last_t:
                raise MalformedTrace(f"line {lineno}: t is not ascending")
            if not (1 <= t <= T and 0 <= arm < K) or min(c) < 0:
                raise MalformedTrace(f"line {lineno}: value out of range")
            last_t = t
            seen_t.add(t)
            counts[t - 1, arm] = c
    return counts


class TraceReplayEnv(Environment):
    """Replays recorded per-round event counts; reward tanh(Σ α_k c_k).

    The oracle uses the realized rewards. Arms become known when they first
    show activity in the trace, at most ``max_new`` new arms per round.
    """
    kind = "TraceReplay"

    def __init__(self, counts, weights: Optional[RewardWeights] = None, obs=None, seed: int = 0,
                 max_new: Optional[int] = None, all_known: bool = True, path: str = ""):
        counts = np.asarray(counts, dtype=float)
        super().__init__(counts.shape[1], obs, seed)
        self.counts = counts
        self.T = counts.shape[0]
        self.weights = weights or RewardWeights()
        self.rewards_table = self.weights.reward(counts)
        self.max_new = max_new
        self.all_known = all_known
        self.path = path
        self._known = np.zeros(self.K, dtype=bool)

    def reset(self, rng, obs_rng=None):
        super().reset(rng, obs_rng)
        self._known[:] = self.all_known

    def known_arms(self, t):
        if not self.all_known:
            fresh = np.flatnonzero((self.counts[t - 1].sum(axis=1) > 0) & ~self._known)
            if self.max_new is not None:
                fresh = fresh[: self.max_new]
            self._known[fresh] = True
        return np.flatnonzero(self._known)

    def expected(self, t):
        if t > self.T:
            raise MissingRound(f"trace has {self.T} rounds, asked for round {t}")
        return self.rewards_table[t - 1]

    def realized(self, t):
        return self.expected(t)

    def step(self, t, selected, k=None):
        res = super().step(t, selected, k)
        if not self.all_known:
            known = np.flatnonzero(self._known)
            e = self.expected(t)[known]
            res.oracle_value = float(np.sum(e[top_k(e, len(selected))]))
        return res

    def manifest(self, dump_truth=False):
        m = super().manifest(dump_truth)
        m.update(path=self.path, weights=list(self.weights.alpha), max_new=self.max_new)
        return m


def trace_replay(log_path, weights: Optional[RewardWeights] = None, K: int = 10, T: int = 100,
                 obs=None, seed: int = 0, max_new: Optional[int] = None) -> TraceReplayEnv:
    counts = read_trace(log_path, K, T)
    return TraceReplayEnv(counts, weights, obs, seed, max_new=max_new,
                          all_known=max_new is None, path=str(log_path))
