"""Index policies and Thompson samplers that only look at per-arm reward
statistics, plus the discounted and sliding-window variants for drifting
rewards."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..core import ArmStats, Policy, RoundLog, top_k, warn_if_above


class RewardOutOfRange(ValueError):
    pass


@dataclass
class StochasticPolicyConfig:
    kind: str = "UCB"
    b: float = 1.0
    a: float = 1.0
    c: float = 1.0
    delta: float = 0.05
    T: int = 1000
    K: int = 10
    eps_c: float = 1.0
    eps_d: float = 0.1
    gamma: float = 1.0
    tau: int = 100
    xi: float = 0.6
    ts_a: float = 0.0
    ts_b: float = 1.0
    ts_sigma: float = 1.0

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError("b must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.a < 0 or self.c < 0:
            raise ValueError("a and c must be nonnegative")


# ---------------------------------------------------------------- scores
# Each score takes counts and sums as arrays and returns +inf where N = 0.

def _with_cold_start(n, value):
    n = np.asarray(n)
    return np.where(n > 0, value, np.inf)


def ucb_score(n, mean, t: int, b: float = 1.0):
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        bonus = np.sqrt(2.0 * b * b * math.log(t) / n)
    return _with_cold_start(n, mean + bonus)


def cucbv_score(n, mean, var, t: int, a: float = 1.0, c: float = 1.0, b: float = 1.0):
    n = np.asarray(n, dtype=float)
    lt = math.log(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        bonus = np.sqrt(2.0 * a * np.asarray(var) * lt / n) + 3.0 * c * b * lt / n
    return _with_cold_start(n, mean + bonus)


def ucb_delta_score(n, mean, K: int, delta: float = 0.05):
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = (1.0 + n) / (n * n) * (1.0 + 2.0 * np.log(K * np.sqrt(1.0 + n) / delta))
        bonus = np.sqrt(np.maximum(inner, 0.0))
    return _with_cold_start(n, mean + bonus)


def moss_score(n, mean, T: int, K: int):
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        bonus = np.sqrt(np.maximum(np.log(T / (K * n)), 0.0) / n)
    return _with_cold_start(n, mean + bonus)


def discounted_ucb_score(disc_count, disc_sum, b: float = 1.0, xi: float = 0.6):
    """μ̂_γ + 2b√(ξ log n_γ / N_γ) with n_γ the total discounted count."""
    disc_count = np.asarray(disc_count, dtype=float)
    total = float(np.sum(disc_count))
    log_total = math.log(total) if total > 1.0 else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.asarray(disc_sum) / disc_count
        bonus = 2.0 * b * np.sqrt(xi * log_total / disc_count)
    return np.where(disc_count > 0, mean + bonus, np.inf)


def sliding_window_ucb_score(win_count, win_sum, t: int, tau: int, b: float = 1.0, xi: float = 0.6):
    win_count = np.asarray(win_count, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.asarray(win_sum) / win_count
        bonus = b * np.sqrt(xi * math.log(min(t, tau)) / win_count)
    return np.where(win_count > 0, mean + bonus, np.inf)


def epsilon_t(t: int, eps_c: float, eps_d: float, K: int) -> float:
    return min(1.0, eps_c * K / (eps_d * eps_d * t))


def discount_for_changes(T: int, n_changes: int) -> float:
    """Discount factor 1 - √(γ_T/T)/4 for γ_T expected change points."""
    return 1.0 - math.sqrt(n_changes / T) / 4.0


def window_for_changes(T: int, n_changes: int) -> int:
    """Window length ⌊2√(T log T / γ_T)⌋ for γ_T expected change points."""
    return int(math.floor(2.0 * math.sqrt(T * math.log(T) / n_changes)))


# ---------------------------------------------------------------- TS helpers

def ts_bernoulli_draw(rng, S, F):
    return rng.beta(np.asarray(S, dtype=float) + 1.0, np.asarray(F, dtype=float) + 1.0)


def ts_bounded_trial(rng, reward: float) -> int:
    """Bernoulli trial with success probability ``reward`` in [0, 1]."""
    if not 0.0 <= reward <= 1.0:
        raise RewardOutOfRange(f"reward {reward} outside [0, 1]")
    return int(rng.random() < reward)


def ts_gaussian_posterior(n, sum_reward, a: float, b: float, sigma: float):
    """Mean and variance of N((a/b + S/σ²)/P, 1/P), P = N/σ² + 1/b."""
    prec = np.asarray(n, dtype=float) / (sigma * sigma) + 1.0 / b
    mean = (a / b + np.asarray(sum_reward) / (sigma * sigma)) / prec
    return mean, 1.0 / prec


# ---------------------------------------------------------------- policies

class StatsPolicy(Policy):
    """Base for policies driven by ArmStats.

    ``batch_mode`` tells the lockstep runner how to advance many independent
    runs at once: "index" policies score every run from stacked statistics
    through ``index``; "rows" policies draw per run from row views of the
    stacked statistics; None opts out.
    """
    batch_mode: Optional[str] = None
    # names of extra per-arm arrays the lockstep runner stacks across runs
    stacked: tuple = ()

    def __init__(self, K: int, k: int, rng=None, window: Optional[int] = None, gamma: float = 1.0):
        super().__init__(K, k, rng)
        self.stats = ArmStats(K, window=window, gamma=gamma)

    def index(self, t: int, stats: ArmStats) -> np.ndarray:
        """Scores of every arm from ``stats`` (any leading batch shape)."""
        raise NotImplementedError

    def scores(self, t, arms):
        return self.index(t, self.stats)[arms]

    def learn(self, log: RoundLog) -> None:
        self.stats.record(log.t, log.rewards)

    def learn_stacked(self, arrays: Dict[str, np.ndarray], rows, sel, rewards) -> None:
        """Update the stacked ``arrays`` named in ``stacked`` with one round
        for every run; ``rewards[r, j]`` is the reward of arm ``sel[r, j]``."""


class RandomPolicy(StatsPolicy):
    name = "Random"
    batch_mode = "rows"

    def scores(self, t, arms):
        return self.rng.random(arms.size)


class UCB(StatsPolicy):
    name = "UCB"
    batch_mode = "index"

    def __init__(self, K, k, rng=None, b: float = 1.0):
        super().__init__(K, k, rng)
        self.b = b

    def index(self, t, stats):
        return ucb_score(stats.n_selected, stats.mean, t, self.b)

    def learn(self, log):
        warn_if_above(log.rewards, self.b, self.name)
        super().learn(log)

    def learn_stacked(self, arrays, rows, sel, rewards):
        warn_if_above({0: float(rewards.max())}, self.b, self.name)


class CUCB(UCB):
    name = "CUCB"


class CUCBV(StatsPolicy):
    name = "CUCBV"
    batch_mode = "index"

    def __init__(self, K, k, rng=None, a: float = 1.0, c: float = 1.0, b: float = 1.0):
        super().__init__(K, k, rng)
        self.a, self.c, self.b = a, c, b

    def index(self, t, stats):
        return cucbv_score(stats.n_selected, stats.mean, stats.variance, t, self.a, self.c, self.b)

    def learn(self, log):
        warn_if_above(log.rewards, self.b, self.name)
        super().learn(log)

    def learn_stacked(self, arrays, rows, sel, rewards):
        warn_if_above({0: float(rewards.max())}, self.b, self.name)


class UCBV(CUCBV):
    name = "UCBV"


class UcbDelta(StatsPolicy):
    name = "UCB-delta"
    batch_mode = "index"

    def __init__(self, K, k, rng=None, delta: float = 0.05):
        super().__init__(K, k, rng)
        self.delta = delta

    def index(self, t, stats):
        return ucb_delta_score(stats.n_selected, stats.mean, self.K, self.delta)


class MOSS(StatsPolicy):
    name = "MOSS"
    batch_mode = "index"

    def __init__(self, K, k, rng=None, T: int = 1000):
        super().__init__(K, k, rng)
        self.T = T

    def index(self, t, stats):
        return moss_score(stats.n_selected, stats.mean, self.T, self.K)


class EpsilonGreedy(StatsPolicy):
    """Each of the k slots explores with probability ε_t = min(1, cK/(d²t))."""
    name = "EpsilonGreedy"

    def __init__(self, K, k, rng=None, eps_c: float = 1.0, eps_d: float = 0.1):
        super().__init__(K, k, rng)
        self.eps_c, self.eps_d = eps_c, eps_d

    def select(self, t, known_arms=None, observed_contexts=None) -> List[int]:
        arms = np.arange(self.K) if known_arms is None else np.asarray(known_arms, dtype=np.int64)
        self._take_contexts(t, observed_contexts)
        if np.any(self.n_selected[arms] == 0):
            return super().select(t, arms)
        eps = epsilon_t(t, self.eps_c, self.eps_d, self.K)
        remaining = list(arms)
        chosen = []
        means = self.stats.mean
        for _ in range(self.k):
            if eps > 0 and self.rng.random() < eps:
                pick = remaining[int(self.rng.integers(len(remaining)))]
            else:
                pick = top_k(means[remaining], 1, remaining)[0]
            chosen.append(int(pick))
            remaining.remove(pick)
        return chosen


class TsBernoulli(StatsPolicy):
    """Beta-Bernoulli sampling; rewards must be 0 or 1."""
    name = "TS-Bernoulli"
    batch_mode = "rows"
    stacked = ("S", "F")

    def __init__(self, K, k, rng=None):
        super().__init__(K, k, rng)
        self.S = np.zeros(K)
        self.F = np.zeros(K)

    def scores(self, t, arms):
        return ts_bernoulli_draw(self.rng, self.S[arms], self.F[arms])

    def learn(self, log):
        super().learn(log)
        for arm, r in log.rewards.items():
            if r not in (0.0, 1.0):
                raise RewardOutOfRange(f"Bernoulli sampler got reward {r}")
            if r == 1.0:
                self.S[arm] += 1
            else:
                self.F[arm] += 1

    def learn_stacked(self, arrays, rows, sel, rewards):
        bad = (rewards != 0.0) & (rewards != 1.0)
        if bad.any():
            raise RewardOutOfRange(f"Bernoulli sampler got reward {rewards[bad][0]}")
        arrays["S"][rows, sel] += rewards == 1.0
        arrays["F"][rows, sel] += rewards == 0.0


class TsBounded(TsBernoulli):
    """Beta sampling for rewards in [0, b] via a Bernoulli trial per reward."""
    name = "TS-Bounded"
    batch_mode = None
    stacked = ()

    def __init__(self, K, k, rng=None, b: float = 1.0):
        super().__init__(K, k, rng)
        self.b = b

    def learn(self, log):
        StatsPolicy.learn(self, log)
        for arm, r in log.rewards.items():
            x = min(max(r, 0.0), self.b) / self.b
            if ts_bounded_trial(self.rng, x):
                self.S[arm] += 1
            else:
                self.F[arm] += 1


class TsGaussian(StatsPolicy):
    name = "TS-Gaussian"
    batch_mode = "rows"

    def __init__(self, K, k, rng=None, ts_a: float = 0.0, ts_b: float = 1.0, ts_sigma: float = 1.0):
        super().__init__(K, k, rng)
        self.a, self.b, self.sigma = ts_a, ts_b, ts_sigma

    def scores(self, t, arms):
        s = self.stats
        mean, var = ts_gaussian_posterior(s.n_selected[arms], s.sum_reward[arms], self.a, self.b, self.sigma)
        return mean + np.sqrt(var) * self.rng.standard_normal(arms.size)


class DiscountedUCB(StatsPolicy):
    name = "Discounted-UCB"

    def __init__(self, K, k, rng=None, gamma: float = 0.99, b: float = 1.0, xi: float = 0.6):
        super().__init__(K, k, rng, gamma=gamma)
        self.b, self.xi = b, xi

    def scores(self, t, arms):
        s = self.stats
        return discounted_ucb_score(s.disc_count, s.disc_sum, self.b, self.xi)[arms]


class SlidingWindowUCB(StatsPolicy):
    """UCB on the rewards of the last τ rounds.

    Windowed counts and sums are kept incrementally: each round's rewards are
    queued and subtracted once they fall out of the window.
    """
    name = "SW-UCB"

    def __init__(self, K, k, rng=None, tau: int = 100, b: float = 1.0, xi: float = 0.6):
        super().__init__(K, k, rng)
        self.tau, self.b, self.xi = tau, b, xi
        self.win_count = np.zeros(K)
        self.win_sum = np.zeros(K)
        self._queue: deque = deque()

    def _expire(self, t: int) -> None:
        # at decision time t the window covers rounds t-τ .. t-1
        while self._queue and self._queue[0][0] < t - self.tau:
            _, arms, rewards = self._queue.popleft()
            self.win_count[arms] -= 1.0
            self.win_sum[arms] -= rewards

    def scores(self, t, arms):
        self._expire(t)
        return sliding_window_ucb_score(self.win_count, self.win_sum, t, self.tau, self.b, self.xi)[arms]

    def select(self, t, known_arms=None, observed_contexts=None):
        self._expire(t)
        arms = np.arange(self.K) if known_arms is None else np.asarray(known_arms, dtype=np.int64)
        # an arm whose window emptied is re-explored like a fresh arm
        self._take_contexts(t, observed_contexts)
        return top_k(self.scores(t, arms), self.k, arms)

    def learn(self, log):
        super().learn(log)
        arms = np.fromiter(log.rewards.keys(), dtype=np.int64)
        rewards = np.fromiter(log.rewards.values(), dtype=float)
        self.win_count[arms] += 1.0
        self.win_sum[arms] += rewards
        self._queue.append((log.t, arms, rewards))


class OraclePolicy(Policy):
    """Selects the top-k arms by the environment's expected reward."""
    name = "Oracle"
    cold_start = False

    def __init__(self, K, k, rng=None, env=None):
        super().__init__(K, k, rng)
        self.env = env

    def scores(self, t, arms):
        return self.env.expected(t)[arms]
