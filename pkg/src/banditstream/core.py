"""Shared data model: arm statistics, round logs, observation processes,
top-k selection and the policy / environment base classes."""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .numerics import Rng


class NotEnoughArms(ValueError):
    pass


class OutOfOrderRound(ValueError):
    pass


# ---------------------------------------------------------------- selection

def top_k(scores, k: int, arms: Optional[Sequence[int]] = None) -> List[int]:
    """The k highest-scoring arms, ties broken by ascending arm id.

    ``scores`` is either a mapping arm -> score or an array aligned with
    ``arms`` (default ``range(len(scores))``). +inf ranks above every finite
    score; NaN ranks below everything.
    """
    if isinstance(scores, Mapping):
        arms = np.fromiter(scores.keys(), dtype=np.int64, count=len(scores))
        values = np.fromiter(scores.values(), dtype=float, count=len(scores))
    else:
        values = np.asarray(scores, dtype=float)
        arms = np.arange(values.size) if arms is None else np.asarray(arms, dtype=np.int64)
    if k > values.size:
        raise NotEnoughArms(f"need {k} arms, only {values.size} available")
    keyed = np.where(np.isnan(values), -np.inf, values)
    if arms.size < 2 or np.all(arms[1:] > arms[:-1]):
        # ascending ids: a stable sort (or argmax, which returns the first
        # maximum) already breaks ties by id
        if k == 1:
            return [int(arms[np.argmax(keyed)])]
        order = np.argsort(-keyed, kind="stable")
    else:
        order = np.lexsort((arms, -keyed))
    return arms[order[:k]].tolist()


# ---------------------------------------------------------------- statistics

class ArmStats:
    """Per-arm sufficient statistics for K arms.

    Holds selection counts, reward sums and squared sums, an optional per-arm
    FIFO of the last ``window`` (t, reward) pairs and γ-discounted counts and
    sums. Discounted aggregates decay once per round in ``record``.
    """

    def __init__(self, K: int, window: Optional[int] = None, gamma: float = 1.0):
        self.K = K
        self.n_selected = np.zeros(K, dtype=np.int64)
        self.sum_reward = np.zeros(K)
        self.sum_sq_reward = np.zeros(K)
        self.window = window
        self.recent = [deque(maxlen=window) for _ in range(K)] if window else None
        self.gamma = gamma
        self.disc_count = np.zeros(K)
        self.disc_sum = np.zeros(K)

    def grow(self, K: int) -> None:
        if K <= self.K:
            return
        extra = K - self.K
        self.n_selected = np.concatenate([self.n_selected, np.zeros(extra, dtype=np.int64)])
        self.sum_reward = np.concatenate([self.sum_reward, np.zeros(extra)])
        self.sum_sq_reward = np.concatenate([self.sum_sq_reward, np.zeros(extra)])
        self.disc_count = np.concatenate([self.disc_count, np.zeros(extra)])
        self.disc_sum = np.concatenate([self.disc_sum, np.zeros(extra)])
        if self.recent is not None:
            self.recent.extend(deque(maxlen=self.window) for _ in range(extra))
        self.K = K

    def record(self, t: int, rewards: Mapping[int, float]) -> None:
        if self.gamma != 1.0:
            self.disc_count *= self.gamma
            self.disc_sum *= self.gamma
        for arm, r in rewards.items():
            self.n_selected[arm] += 1
            self.sum_reward[arm] += r
            self.sum_sq_reward[arm] += r * r
            self.disc_count[arm] += 1.0
            self.disc_sum[arm] += r
            if self.recent is not None:
                self.recent[arm].append((t, r))

    @property
    def mean(self) -> np.ndarray:
        n = np.maximum(self.n_selected, 1)
        return np.where(self.n_selected > 0, self.sum_reward / n, 0.0)

    @property
    def variance(self) -> np.ndarray:
        """Biased empirical variance sum_sq/N - mean²."""
        n = np.maximum(self.n_selected, 1)
        m = self.mean
        v = np.where(self.n_selected > 0, self.sum_sq_reward / n - m * m, 0.0)
        return np.maximum(v, 0.0)


# ---------------------------------------------------------------- round records

@dataclass
class RoundLog:
    t: int
    selected: tuple
    rewards: Dict[int, float]
    observed: tuple = ()
    contexts: Dict[int, np.ndarray] = field(default_factory=dict)
    # full reward vector, only filled for policies that ask for full information
    full_rewards: Optional[np.ndarray] = None

    def check(self, k: int) -> None:
        if len(self.selected) != k or len(set(self.selected)) != k:
            raise ValueError(f"round {self.t}: expected {k} distinct arms, got {self.selected}")
        if set(self.rewards) != set(self.selected):
            raise ValueError(f"round {self.t}: rewards not keyed by the selected arms")
        if set(self.contexts) - set(self.observed):
            raise ValueError(f"round {self.t}: contexts given for unobserved arms")


@dataclass
class Trajectory:
    rounds: List[RoundLog] = field(default_factory=list)
    oracle_values: List[float] = field(default_factory=list)
    selected_values: List[float] = field(default_factory=list)

    def append(self, log: RoundLog, oracle_value: float, selected_value: float) -> None:
        self.rounds.append(log)
        self.oracle_values.append(oracle_value)
        self.selected_values.append(selected_value)

    def __len__(self) -> int:
        return len(self.rounds)


# ---------------------------------------------------------------- observation

ALL = "all"
BERNOULLI = "bernoulli"
LAST_SELECTED = "last_selected"


@dataclass
class ObservationProcess:
    """Which arms reveal their context at round t.

    ``all``: every arm. ``bernoulli``: each arm independently with probability
    p. ``last_selected``: exactly the arms selected at t-1 (none at t=1).
    """
    mode: str = ALL
    p: float = 1.0

    def __post_init__(self):
        if self.mode not in (ALL, BERNOULLI, LAST_SELECTED):
            raise ValueError(f"unknown observation mode {self.mode!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"observation probability must lie in [0, 1], got {self.p}")

    def observe(self, rng: Rng, t: int, K: int, prev_selected: Sequence[int]) -> np.ndarray:
        if self.mode == ALL:
            return np.arange(K)
        if self.mode == LAST_SELECTED:
            return np.sort(np.asarray(prev_selected, dtype=np.int64)) if t > 1 else np.empty(0, np.int64)
        # draw for every arm so that the stream does not depend on the policy
        return np.flatnonzero(rng.random(K) < self.p)

    def label(self) -> str:
        if self.mode == BERNOULLI:
            return f"p={self.p:g}"
        return self.mode


# ---------------------------------------------------------------- contracts

@dataclass
class StepResult:
    rewards: Dict[int, float]
    oracle_value: float
    selected_value: float


class Environment:
    """Generative ground truth plus a per-round oracle.

    Subclasses fill ``begin_round`` (draw the round's latent quantities),
    ``expected`` (per-arm expected reward at t, the regret reference) and
    ``realized`` (per-arm realized reward at t). Per-round draws cover every
    arm so that the random stream is independent of what the policy selects.
    """

    kind = "environment"
    context_dim = 0

    def __init__(self, K: int, obs: Optional[ObservationProcess] = None, seed: int = 0):
        self.K = K
        self.obs = obs or ObservationProcess()
        self.seed = seed
        self.rng: Rng = np.random.default_rng(seed)
        self.obs_rng: Rng = self.rng
        self.t = 0

    def reset(self, rng: Rng, obs_rng: Optional[Rng] = None) -> None:
        """Start an episode on a fresh episode stream (ground truth unchanged).

        Observation draws use ``obs_rng`` when given, so that changing the
        observation process leaves the reward stream untouched.
        """
        self.rng = rng
        self.obs_rng = obs_rng if obs_rng is not None else rng
        self.t = 0

    def known_arms(self, t: int) -> np.ndarray:
        return np.arange(self.K)

    def begin_round(self, t: int) -> None:
        self.t = t

    def observe(self, t: int, prev_selected: Sequence[int],
                contexts: bool = True) -> Dict[int, Optional[np.ndarray]]:
        """Observed arms mapped to their contexts (None when ``contexts`` is off)."""
        arms = self.obs.observe(self.obs_rng, t, self.K, prev_selected)
        if not contexts:
            return {int(i): None for i in arms}
        return {int(i): self.context(t, int(i)) for i in arms}

    def context(self, t: int, arm: int) -> Optional[np.ndarray]:
        return None

    def expected(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def realized(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def end_round(self, t: int) -> None:
        pass

    def oracle_value(self, t: int, k: int) -> float:
        """Sum of the k largest expected rewards at t."""
        e = self.expected(t)
        return float(np.sum(np.partition(e, e.size - k)[e.size - k:]))

    def step(self, t: int, selected: Sequence[int], k: Optional[int] = None) -> StepResult:
        k = len(selected) if k is None else k
        e = self.expected(t)
        r = self.realized(t)
        sel = list(selected)
        return StepResult(
            rewards={int(i): float(r[i]) for i in sel},
            oracle_value=self.oracle_value(t, k),
            selected_value=float(e[sel].sum()),
        )

    def manifest(self, dump_truth: bool = False) -> dict:
        return {"kind": self.kind, "K": self.K, "seed": self.seed,
                "obs": {"mode": self.obs.mode, "p": self.obs.p}}


class Policy:
    """Top-k policy contract.

    ``select`` returns k distinct arms; arms that are known but never selected
    score +inf (cold start) and therefore come first in ascending id order.
    ``update`` consumes the round's rewards and revealed contexts.
    """

    name = "policy"
    cold_start = True
    wants_full_rewards = False
    uses_contexts = False

    def __init__(self, K: int, k: int, rng: Optional[Rng] = None):
        if k > K:
            raise NotEnoughArms(f"k={k} exceeds K={K}")
        self.K = K
        self.k = k
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.n_selected = np.zeros(K, dtype=np.int64)
        self.last_t = 0
        self._ctx_t = 0

    # subclasses override -------------------------------------------------
    def scores(self, t: int, arms: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def ingest_contexts(self, t: int, contexts: Mapping[int, np.ndarray]) -> None:
        """Context-only statistics; called at most once per round."""

    def learn(self, log: RoundLog) -> None:
        """Reward statistics for one round."""

    # contract ------------------------------------------------------------
    def _take_contexts(self, t: int, contexts: Optional[Mapping[int, np.ndarray]]) -> None:
        if contexts and self._ctx_t != t:
            self.ingest_contexts(t, contexts)
        self._ctx_t = t

    def select(self, t: int, known_arms: Optional[Sequence[int]] = None,
               observed_contexts: Optional[Mapping[int, np.ndarray]] = None) -> List[int]:
        arms = np.arange(self.K) if known_arms is None else np.asarray(known_arms, dtype=np.int64)
        if arms.size < self.k:
            raise NotEnoughArms(f"need {self.k} known arms, have {arms.size}")
        self._take_contexts(t, observed_contexts)
        if self.cold_start:
            fresh = arms[self.n_selected[arms] == 0]
            if fresh.size >= self.k:
                return [int(a) for a in np.sort(fresh)[: self.k]]
            if fresh.size:
                rest = arms[self.n_selected[arms] > 0]
                chosen = top_k(self.scores(t, rest), self.k - fresh.size, rest)
                return [int(a) for a in np.sort(fresh)] + chosen
        return top_k(self.scores(t, arms), self.k, arms)

    def update(self, log: RoundLog) -> None:
        if log.t <= self.last_t:
            raise OutOfOrderRound(f"round {log.t} after round {self.last_t}")
        self._take_contexts(log.t, log.contexts)
        for arm in log.rewards:
            self.n_selected[arm] += 1
        self.learn(log)
        self.last_t = log.t


def warn_if_above(rewards: Mapping[int, float], b: float, who: str) -> None:
    if any(r > b for r in rewards.values()):
        warnings.warn(f"{who}: reward above the assumed bound b={b}", RuntimeWarning, stacklevel=3)
