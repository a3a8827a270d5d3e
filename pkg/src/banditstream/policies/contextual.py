"""Linear contextual policies.

Shared-parameter models where an arm's expected reward is xᵀβ. Besides
LinUCB / OFUL / linear Thompson sampling this module holds the policies for
hidden or noisy contexts:

* SampLinUCB: each arm has a fixed profile seen only through noisy samples;
  regression on the running profile means, with an extra premium for
  profile uncertainty.
* HiddenLinUCB (Mean / Sample): bias-centred regression on rounds where the
  selected arm's context was visible; unobserved arms are scored with the
  running mean context or with sampled contexts.
* HiddenLinUCB (variational): mean-field posterior over β, per-arm context
  means μ_i, precisions τ_i and the contexts of rounds where an arm was
  selected but not observed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np

from ..core import Policy, RoundLog
from ..numerics import (chi2_inv_cdf, inv_spd, logdet_spd, norm_inv_cdf,
                        sample_mvn, solve_spd, NotPositiveDefinite)


class NeverObserved(ValueError):
    pass


class NonPsdCovariance(ArithmeticError):
    pass


# ---------------------------------------------------------------- ridge state

class RidgeState:
    """V = λI + Σ w·xxᵀ and b = Σ w·r·x for a shared linear model."""

    def __init__(self, d: int, lam: float = 1.0):
        self.d = d
        self.lam = lam
        self.V = lam * np.eye(d)
        self.b_vec = np.zeros(d)

    def add(self, x, r: float, weight: float = 1.0) -> None:
        x = np.asarray(x, dtype=float)
        self.V += weight * np.outer(x, x)
        self.b_vec += weight * r * x

    @property
    def beta(self) -> np.ndarray:
        return solve_spd(self.V, self.b_vec)

    def logdet_ratio(self) -> float:
        """log det(V) - log det(λI)."""
        return logdet_spd(self.V) - self.d * math.log(self.lam)


def linucb_score(ridge: RidgeState, x, alpha: float) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (ridge.d,):
        raise ValueError(f"context has shape {x.shape}, expected ({ridge.d},)")
    z = solve_spd(ridge.V, x)
    return float(x @ ridge.beta + alpha * math.sqrt(max(x @ z, 0.0)))


def oful_alpha(ridge: RidgeState, R: float, S_bound: float, delta: float) -> float:
    return R * math.sqrt(2.0 * (0.5 * ridge.logdet_ratio() + math.log(1.0 / delta))) \
        + math.sqrt(ridge.lam) * S_bound


def contextual_ts_draw(rng, ridge: RidgeState, sigma: float) -> np.ndarray:
    cov = sigma * sigma * inv_spd(ridge.V)
    return sample_mvn(rng, ridge.beta, cov)


class _LastContext:
    """Remembers the latest revealed context per arm."""

    def __init__(self, K: int, d: int):
        self.x = np.zeros((K, d))
        self.seen = np.zeros(K, dtype=bool)

    def store(self, contexts: Mapping[int, np.ndarray]) -> None:
        for arm, x in contexts.items():
            self.x[arm] = x
            self.seen[arm] = True


class LinUCB(Policy):
    """Shared-β LinUCB; arms without a fresh context use their last one."""
    name = "LinUCB"
    uses_contexts = True

    def __init__(self, K, k, rng=None, d: int = 5, alpha: float = 1.0, lam: float = 1.0):
        super().__init__(K, k, rng)
        self.ridge = RidgeState(d, lam)
        self.alpha = alpha
        self.last = _LastContext(K, d)

    def ingest_contexts(self, t, contexts):
        self.last.store(contexts)

    def current_alpha(self) -> float:
        return self.alpha

    def scores(self, t, arms):
        X = self.last.x[arms]
        Vinv = inv_spd(self.ridge.V)
        bonus = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", X, Vinv, X), 0.0))
        s = X @ self.ridge.beta + self.current_alpha() * bonus
        return np.where(self.last.seen[arms], s, np.inf)

    def learn(self, log):
        for arm, r in log.rewards.items():
            if self.last.seen[arm]:
                self.ridge.add(self.last.x[arm], r)


class OFUL(LinUCB):
    name = "OFUL"

    def __init__(self, K, k, rng=None, d: int = 5, lam: float = 1.0, R: float = 1.0,
                 S_bound: float = 1.0, delta: float = 0.05):
        super().__init__(K, k, rng, d=d, lam=lam)
        self.R, self.S_bound, self.delta = R, S_bound, delta

    def current_alpha(self) -> float:
        return oful_alpha(self.ridge, self.R, self.S_bound, self.delta)


class ContextualTS(LinUCB):
    name = "ContextualTS"

    def __init__(self, K, k, rng=None, d: int = 5, lam: float = 1.0, sigma: float = 1.0):
        super().__init__(K, k, rng, d=d, lam=lam)
        self.sigma = sigma

    def scores(self, t, arms):
        beta = contextual_ts_draw(self.rng, self.ridge, self.sigma)
        s = self.last.x[arms] @ beta
        return np.where(self.last.seen[arms], s, np.inf)


# ---------------------------------------------------------------- SampLinUCB

def samplin_rho(n_obs, t: int, L: float, d: int, delta: float):
    """Profile-estimate radius min(L·d·√((2/n)·log(2dt²/δ)), 2L)."""
    n = np.asarray(n_obs, dtype=float)
    with np.errstate(divide="ignore"):
        r = L * d * np.sqrt((2.0 / n) * math.log(2.0 * d * t * t / delta))
    return np.minimum(r, 2.0 * L)


def samplin_score(x_hat, beta, Vinv, alpha: float, rho, lam: float):
    """x̂ᵀβ̂ + α‖x̂‖_{V⁻¹} + ρ(‖β̂‖ + α/√λ), rowwise for a batch of arms."""
    X = np.atleast_2d(x_hat)
    norm_v = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", X, Vinv, X), 0.0))
    return X @ beta + alpha * norm_v + np.asarray(rho) * (np.linalg.norm(beta) + alpha / math.sqrt(lam))


def samplin_score_perturbed(x_hat, beta, Vinv, alpha: float, rho: float, lam: float) -> float:
    """The same score written as (x̂+ε̄)ᵀβ̂ + α‖x̂+ε̃‖_{V⁻¹}.

    ε̄ = ρβ̂/‖β̂‖ points along β̂ and ε̃ = ρx̂/(√λ‖x̂‖_{V⁻¹}) stretches x̂, so
    the two perturbations add exactly ρ‖β̂‖ and αρ/√λ.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    nb = np.linalg.norm(beta)
    eps_bar = rho * beta / nb if nb > 0 else np.zeros_like(beta)
    norm_v = math.sqrt(max(x_hat @ Vinv @ x_hat, 0.0))
    eps_tilde = rho * x_hat / (math.sqrt(lam) * norm_v) if norm_v > 0 else np.zeros_like(x_hat)
    y = x_hat + eps_tilde
    return float((x_hat + eps_bar) @ beta + alpha * math.sqrt(max(y @ Vinv @ y, 0.0)))


@dataclass
class ProfileState:
    n_obs: np.ndarray
    sum_x: np.ndarray
    x_hat: np.ndarray
    R_weight: np.ndarray
    n_sel: np.ndarray
    sum_r: np.ndarray

    @classmethod
    def empty(cls, K: int, d: int) -> "ProfileState":
        return cls(np.zeros(K, dtype=np.int64), np.zeros((K, d)), np.zeros((K, d)),
                   np.full(K, np.inf), np.zeros(K), np.zeros(K))


class SampLinUCB(Policy):
    """Regression on noisy profile means, weighting each arm by 1/R_i.

    V = λI + Σ_i N_i x̂_i x̂_iᵀ / R_i and b = Σ_i S_i x̂_i / R_i with N_i, S_i
    the selection count and reward sum and R_i = √(R² + L²S²/n_i). A new
    profile sample removes the arm's contribution, refreshes x̂_i and R_i
    and reinserts it.
    """
    name = "SampLinUCB"
    uses_contexts = True

    def __init__(self, K, k, rng=None, d: int = 5, L_norm: float = 1.0, S_bound: float = 1.0,
                 R: float = 1.0, delta: float = 0.05, lam: Optional[float] = None):
        super().__init__(K, k, rng)
        self.d, self.L, self.S, self.R, self.delta = d, L_norm, S_bound, R, delta
        self.lam = max(1.0, 2.0 * L_norm * L_norm) if lam is None else lam
        self.ridge = RidgeState(d, self.lam)
        self.prof = ProfileState.empty(K, d)

    def _contribution(self, arm: int, sign: float) -> None:
        p = self.prof
        if p.n_obs[arm] == 0:
            return
        x, w = p.x_hat[arm], 1.0 / p.R_weight[arm]
        self.ridge.V += sign * w * p.n_sel[arm] * np.outer(x, x)
        self.ridge.b_vec += sign * w * p.sum_r[arm] * x

    def add_sample(self, arm: int, x) -> None:
        p = self.prof
        self._contribution(arm, -1.0)
        p.n_obs[arm] += 1
        p.sum_x[arm] += x
        p.x_hat[arm] = p.sum_x[arm] / p.n_obs[arm]
        p.R_weight[arm] = math.sqrt(self.R ** 2 + (self.L * self.S) ** 2 / p.n_obs[arm])
        self._contribution(arm, 1.0)

    def add_samples(self, arms, X) -> None:
        """add_sample for several distinct arms at once."""
        p = self.prof
        arms = np.asarray(arms, dtype=int)
        X = np.asarray(X, dtype=float).reshape(arms.size, self.d)
        self._contributions(arms, -1.0)
        p.n_obs[arms] += 1
        p.sum_x[arms] += X
        p.x_hat[arms] = p.sum_x[arms] / p.n_obs[arms, None]
        p.R_weight[arms] = np.sqrt(self.R ** 2 + (self.L * self.S) ** 2 / p.n_obs[arms])
        self._contributions(arms, 1.0)

    def _contributions(self, arms, sign: float) -> None:
        p = self.prof
        arms = arms[p.n_obs[arms] > 0]
        x = p.x_hat[arms]
        w = 1.0 / p.R_weight[arms]
        self.ridge.V += sign * (x.T * (w * p.n_sel[arms])) @ x
        self.ridge.b_vec += sign * (w * p.sum_r[arms]) @ x

    def ingest_contexts(self, t, contexts):
        if contexts:
            self.add_samples(list(contexts), np.array(list(contexts.values()), dtype=float))

    def alpha_t(self) -> float:
        return math.sqrt(2.0 * (0.5 * self.ridge.logdet_ratio() + math.log(1.0 / self.delta))) \
            + math.sqrt(self.lam) * self.S

    def scores(self, t, arms):
        p = self.prof
        Vinv = inv_spd(self.ridge.V)
        beta = Vinv @ self.ridge.b_vec
        seen = p.n_obs[arms] > 0
        out = np.full(arms.size, np.inf)
        if np.any(seen):
            a = arms[seen]
            rho = samplin_rho(p.n_obs[a], t, self.L, self.d, self.delta)
            out[seen] = samplin_score(p.x_hat[a], beta, Vinv, self.alpha_t(), rho, self.lam)
        return out

    def learn(self, log):
        p = self.prof
        for arm, r in log.rewards.items():
            p.n_sel[arm] += 1
            p.sum_r[arm] += r
            if p.n_obs[arm] > 0:
                x, w = p.x_hat[arm], 1.0 / p.R_weight[arm]
                self.ridge.V += w * np.outer(x, x)
                self.ridge.b_vec += w * r * x

    def rebuild(self) -> RidgeState:
        """V and b recomputed from scratch; used to check the incremental path."""
        p = self.prof
        ridge = RidgeState(self.d, self.lam)
        for arm in np.flatnonzero(p.n_obs > 0):
            w = 1.0 / p.R_weight[arm]
            ridge.V += w * p.n_sel[arm] * np.outer(p.x_hat[arm], p.x_hat[arm])
            ridge.b_vec += w * p.sum_r[arm] * p.x_hat[arm]
        return ridge


# ---------------------------------------------------------------- HiddenLinUCB, closed form

class HiddenBiasState:
    """Bias-centred regression from rounds where a selected arm was observed.

    Per arm: N (selected and observed count), s (reward sum), c (context sum)
    on those rounds, so that μ̄ = s/(N+1) and x̄ = c/(N+1). Globally
    V = I + Σ_i [Σ xxᵀ - c cᵀ/(N+1)] and b = Σ_i [Σ r x - c s/(N+1)].
    """

    def __init__(self, K: int, d: int):
        self.K, self.d = K, d
        self.V = np.eye(d)
        self.b_vec = np.zeros(d)
        self.N = np.zeros(K)
        self.s = np.zeros(K)
        self.c = np.zeros((K, d))

    def add(self, arm: int, x, r: float) -> None:
        x = np.asarray(x, dtype=float)
        N, c, s = self.N[arm], self.c[arm], self.s[arm]
        self.V += np.outer(c, c) / (N + 1)
        self.b_vec += c * s / (N + 1)
        self.N[arm] = N = N + 1
        self.s[arm] = s = s + r
        self.c[arm] = c = c + x
        self.V += np.outer(x, x) - np.outer(c, c) / (N + 1)
        self.b_vec += r * x - c * s / (N + 1)

    @property
    def mu_bar(self) -> np.ndarray:
        return self.s / (self.N + 1)

    @property
    def x_bar(self) -> np.ndarray:
        return self.c / (self.N + 1)[:, None]

    def beta(self) -> np.ndarray:
        return solve_spd(self.V, self.b_vec)


def hidden_bias_posterior_batch(d: int, pairs_by_arm: Dict[int, list]):
    """V, β̄, μ̄, x̄ computed in one pass from (x, r) lists per arm."""
    V = np.eye(d)
    b = np.zeros(d)
    mu_bar, x_bar = {}, {}
    for arm, pairs in pairs_by_arm.items():
        X = np.array([p[0] for p in pairs], dtype=float).reshape(-1, d)
        r = np.array([p[1] for p in pairs], dtype=float)
        n1 = len(pairs) + 1
        c, s = X.sum(axis=0), r.sum()
        V += X.T @ X - np.outer(c, c) / n1
        b += X.T @ r - c * s / n1
        mu_bar[arm], x_bar[arm] = s / n1, c / n1
    return V, solve_spd(V, b), mu_bar, x_bar


def hidden_observed_score(mu_bar, x_bar, N, beta, Vinv, x, alpha):
    """μ̄ + (x-x̄)ᵀβ̄ + α√(1/(N+1) + (x-x̄)ᵀV⁻¹(x-x̄)), rowwise."""
    D = np.atleast_2d(x) - np.atleast_2d(x_bar)
    quad = np.einsum("ij,jk,ik->i", D, Vinv, D)
    return mu_bar + D @ beta + alpha * np.sqrt(1.0 / (np.asarray(N) + 1.0) + np.maximum(quad, 0.0))


def hidden_mean_unobserved_score(mu_bar, x_bar, N, beta, Vinv, x_hat, n_obs, alpha1, alpha2):
    n_obs = np.asarray(n_obs, dtype=float)
    if np.any(n_obs < 1):
        raise NeverObserved("unobserved score needs at least one revealed context")
    base = hidden_observed_score(mu_bar, x_bar, N, beta, Vinv, x_hat, alpha1)
    return base + alpha2 * np.sqrt(1.0 / n_obs)


def gaussian_predictive(n: int, x_hat, Sigma0=None, Sigma=None):
    """Posterior predictive of a new context under x ~ N(μ, Σ), μ ~ N(0, Σ₀)."""
    x_hat = np.asarray(x_hat, dtype=float)
    d = x_hat.shape[0]
    Sigma0 = np.eye(d) if Sigma0 is None else Sigma0
    Sigma = np.eye(d) if Sigma is None else Sigma
    Sinv = inv_spd(Sigma)
    post_prec = inv_spd(Sigma0) + n * Sinv
    post_cov = inv_spd(post_prec)
    mean = post_cov @ (n * Sinv @ x_hat)
    return mean, post_cov + Sigma


class ActivityState:
    """Per-arm, per-period Beta-Bernoulli activity counts."""

    def __init__(self, K: int, M: int = 8, steps_per_period: int = 10):
        self.M, self.steps = M, steps_per_period
        self.S = np.zeros((K, M))
        self.F = np.zeros((K, M))

    def period(self, t: int) -> int:
        return ((t - 1) // self.steps) % self.M

    def record(self, t: int, arm: int, active: bool) -> None:
        j = self.period(t)
        if active:
            self.S[arm, j] += 1
        else:
            self.F[arm, j] += 1

    def prob(self, t: int, arms) -> np.ndarray:
        j = self.period(t)
        return (self.S[arms, j] + 1.0) / (self.S[arms, j] + self.F[arms, j] + 2.0)


class HiddenLinUCBMean(Policy):
    """Observed arms use the centred regression score; unobserved arms use
    the running mean of their revealed contexts plus a √(1/n) premium."""
    name = "HiddenLinUCB-Mean"
    uses_contexts = True

    def __init__(self, K, k, rng=None, d: int = 10, alpha: float = 1.96,
                 alpha1: float = 1.96, alpha2: float = 1.96):
        super().__init__(K, k, rng)
        self.d = d
        self.alpha, self.alpha1, self.alpha2 = alpha, alpha1, alpha2
        self.state = HiddenBiasState(K, d)
        self.n_obs = np.zeros(K)
        self.sum_x = np.zeros((K, d))
        self.current: Dict[int, np.ndarray] = {}
        self._current_t = 0

    def ingest_contexts(self, t, contexts):
        self.current = {a: np.asarray(x, dtype=float) for a, x in contexts.items()}
        self._current_t = t
        for arm, x in self.current.items():
            self.n_obs[arm] += 1
            self.sum_x[arm] += x

    def _visible(self, t):
        return self.current if self._current_t == t else {}

    def _unobserved_scores(self, t, arms, beta, Vinv):
        st = self.state
        out = np.full(arms.size, np.inf)
        ok = self.n_obs[arms] > 0
        a = arms[ok]
        if a.size:
            x_hat = self.sum_x[a] / self.n_obs[a][:, None]
            out[ok] = hidden_mean_unobserved_score(st.mu_bar[a], st.x_bar[a], st.N[a], beta, Vinv,
                                                   x_hat, self.n_obs[a], self.alpha1, self.alpha2)
        return out

    def scores(self, t, arms):
        st = self.state
        Vinv = inv_spd(st.V)
        beta = Vinv @ st.b_vec
        visible = self._visible(t)
        obs_mask = np.array([int(a) in visible for a in arms], dtype=bool)
        out = np.empty(arms.size)
        if np.any(obs_mask):
            a = arms[obs_mask]
            X = np.array([visible[int(i)] for i in a])
            out[obs_mask] = hidden_observed_score(st.mu_bar[a], st.x_bar[a], st.N[a], beta, Vinv, X, self.alpha)
        if np.any(~obs_mask):
            out[~obs_mask] = self._unobserved_scores(t, arms[~obs_mask], beta, Vinv)
        return out

    def learn(self, log):
        for arm, r in log.rewards.items():
            if arm in log.contexts:
                self.state.add(arm, log.contexts[arm], r)


class HiddenLinUCBSample(HiddenLinUCBMean):
    """Unobserved arms are scored by averaging the observed-context score
    over sampled contexts: an activity draw for the current period, then a
    context from the Gaussian posterior predictive (or 0 when inactive)."""
    name = "HiddenLinUCB-Sample"

    def __init__(self, K, k, rng=None, d: int = 10, alpha: float = 1.96, L_samples: int = 50,
                 M: int = 8, steps_per_period: int = 10, activity_tol: float = 0.0):
        super().__init__(K, k, rng, d=d, alpha=alpha)
        self.L_samples = L_samples
        self.activity = ActivityState(K, M, steps_per_period)
        self.n_active = np.zeros(K)
        self.sum_active = np.zeros((K, d))
        self.activity_tol = activity_tol

    def ingest_contexts(self, t, contexts):
        super().ingest_contexts(t, contexts)
        for arm, x in self.current.items():
            active = bool(np.any(np.abs(x) > self.activity_tol))
            self.activity.record(t, arm, active)
            if active:
                self.n_active[arm] += 1
                self.sum_active[arm] += x

    def _unobserved_scores(self, t, arms, beta, Vinv):
        st = self.state
        out = np.empty(arms.size)
        p_active = self.activity.prob(t, arms)
        d = self.d
        for j, arm in enumerate(arms):
            n = int(self.n_active[arm])
            x_hat = self.sum_active[arm] / n if n else np.zeros(d)
            mean, cov = gaussian_predictive(n, x_hat)
            active = self.rng.random(self.L_samples) < p_active[j]
            X = np.zeros((self.L_samples, d))
            m = int(active.sum())
            if m:
                X[active] = self.rng.multivariate_normal(mean, cov, size=m, method="cholesky")
            s = hidden_observed_score(st.mu_bar[arm], st.x_bar[arm], st.N[arm], beta, Vinv, X, self.alpha)
            out[j] = float(np.mean(s))
        return out


# ---------------------------------------------------------------- HiddenLinUCB, variational

def hidden_vi_alphas(d: int, delta: float = 0.05, delta1: float = 0.025, delta2: float = 0.025,
                     S_bound: float = 1.0):
    """(α, α₁, α₂) = (Φ⁻¹(1-δ/2), Φ⁻¹(1-δ₁/2), S√(χ²_d⁻¹(1-δ₂)))."""
    return (norm_inv_cdf(1.0 - delta / 2.0), norm_inv_cdf(1.0 - delta1 / 2.0),
            S_bound * math.sqrt(chi2_inv_cdf(1.0 - delta2, d)))


class VariationalContextState:
    """Mean-field posterior for the hidden-context model.

    Model: r | x ~ N(xᵀβ, 1), β ~ N(0, I), x_{i,s} ~ N(μ_i, τ_i⁻¹I),
    μ_i ~ N(0, τ_i⁻¹I), τ_i ~ Gamma(a₀, b₀). Sets per arm: A (selected and
    observed), B (selected, not observed; latent context), C (observed).
    A and C enter through running sums; B latents live in a sliding window
    and are stored flat, one row per (arm, round).

    Given β the arms' factors are independent, so all arms are updated at
    once; this is the same as visiting them one after another.
    """

    def __init__(self, K: int, d: int, a0: float = 2.0, b0: float = 1.0, window: int = 100, init_rng=None):
        self.K, self.d = K, d
        # latent contexts start at the arm's running mean, plus N(0, I) noise when init_rng is given
        self.init_rng = init_rng
        self.a0, self.b0 = a0, b0
        self.window = window
        # A: Σ xxᵀ and Σ r x
        self.A_xx = np.zeros((d, d))
        self.A_xr = np.zeros(d)
        # C: per-arm counts, context sums and squared norms
        self.C_n = np.zeros(K)
        self.C_x = np.zeros((K, d))
        self.C_xx = np.zeros(K)
        # B latents: arm, round, reward and q(x) mean per row; covariance per arm
        self.B_arm = np.zeros(0, dtype=np.int64)
        self.B_t = np.zeros(0, dtype=np.int64)
        self.B_r = np.zeros(0)
        self.B_m = np.zeros((0, d))
        self.B_cov = np.tile(np.eye(d), (K, 1, 1))
        # variational parameters
        self.beta = np.zeros(d)
        self.V = np.eye(d)
        self.Vinv = np.eye(d)
        self.mu = np.zeros((K, d))
        self.mu_var = np.ones(K)          # q(μ_i) covariance is mu_var·I
        self.a = np.full(K, a0)
        self.b = np.full(K, b0)

    # data ----------------------------------------------------------------
    def add_observed(self, arm: int, x) -> None:
        x = np.asarray(x, dtype=float)
        self.C_n[arm] += 1
        self.C_x[arm] += x
        self.C_xx[arm] += x @ x

    def add_selected_observed(self, x, r: float) -> None:
        x = np.asarray(x, dtype=float)
        self.A_xx += np.outer(x, x)
        self.A_xr += r * x

    def add_selected_hidden(self, arm: int, t: int, r: float) -> None:
        n = self.C_n[arm]
        init = self.C_x[arm] / n if n else np.zeros(self.d)
        if self.init_rng is not None:
            init = init + self.init_rng.standard_normal(self.d)
        self.B_arm = np.append(self.B_arm, arm)
        self.B_t = np.append(self.B_t, t)
        self.B_r = np.append(self.B_r, r)
        self.B_m = np.vstack([self.B_m, init])

    def drop_old(self, t: int) -> None:
        """Forget latent contexts of rounds older than the window."""
        if self.window is None:
            return
        keep = self.B_t >= t - self.window
        if not keep.all():
            self.B_arm, self.B_t = self.B_arm[keep], self.B_t[keep]
            self.B_r, self.B_m = self.B_r[keep], self.B_m[keep]

    def n_latent(self) -> np.ndarray:
        return np.bincount(self.B_arm, minlength=self.K).astype(float)

    def latent_means(self, arm: int) -> np.ndarray:
        return self.B_m[self.B_arm == arm]

    # updates -------------------------------------------------------------
    def update_beta(self) -> None:
        nB = self.n_latent()
        V = np.eye(self.d) + self.A_xx + np.einsum("i,ijk->jk", nB, self.B_cov) + self.B_m.T @ self.B_m
        rhs = self.A_xr + self.B_m.T @ self.B_r
        try:
            self.Vinv = inv_spd(V)
        except NotPositiveDefinite as exc:
            raise NonPsdCovariance(str(exc)) from None
        self.V = V
        self.beta = self.Vinv @ rhs

    def update_arms(self, onehot=None) -> None:
        """(μ_i, τ_i) then the latent x_{i,s} of every arm, given β."""
        d = self.d
        if onehot is None:
            onehot = self._onehot()
        nB = onehot.sum(axis=1)
        n = nB + self.C_n
        sx = self.C_x + onehot @ self.B_m
        sxx = self.C_xx + nB * np.trace(self.B_cov, axis1=1, axis2=2) + onehot @ np.sum(self.B_m ** 2, axis=1)
        e_tau = self.a / self.b
        # q(μ_i): precision (1+n)E[τ]I
        self.mu = sx / (1.0 + n)[:, None]
        self.mu_var = 1.0 / ((1.0 + n) * e_tau)
        # q(τ_i)
        e_mumu = d * self.mu_var + np.sum(self.mu ** 2, axis=1)
        self.a = self.a0 + 0.5 * d * (1.0 + n)
        self.b = self.b0 + 0.5 * ((1.0 + n) * e_mumu - 2.0 * np.sum(self.mu * sx, axis=1) + sxx)
        if np.any(self.b <= 0):
            raise NonPsdCovariance("nonpositive Gamma rate")
        # q(x_{i,s}): precision Vinv + ββᵀ + E[τ_i]I, shared eigenvectors
        has = nB > 0
        if np.any(has):
            e_tau = self.a / self.b
            lam, Q = np.linalg.eigh(self.Vinv + np.outer(self.beta, self.beta))
            inv_eigs = 1.0 / (lam[None, :] + e_tau[has, None])
            self.B_cov[has] = np.einsum("ij,aj,kj->aik", Q, inv_eigs, Q)
            rhs = self.B_r[:, None] * self.beta[None, :] + e_tau[self.B_arm, None] * self.mu[self.B_arm]
            self.B_m = np.einsum("nj,njk->nk", rhs, self.B_cov[self.B_arm])

    def _onehot(self) -> np.ndarray:
        oh = np.zeros((self.K, self.B_arm.size))
        oh[self.B_arm, np.arange(self.B_arm.size)] = 1.0
        return oh

    def sweep(self, n_iter: int = 1) -> float:
        """Coordinate sweeps β → (μ_i, τ_i, x_{i,s}); returns the last sweep's
        largest parameter change."""
        delta = 0.0
        onehot = self._onehot()
        for _ in range(n_iter):
            before = self._flat()
            self.update_beta()
            self.update_arms(onehot)
            delta = float(np.max(np.abs(self._flat() - before)))
        return delta

    def _flat(self) -> np.ndarray:
        return np.concatenate([self.beta, self.V.ravel(), self.mu.ravel(), self.mu_var, self.a, self.b,
                               self.B_m.ravel()])

    # scores --------------------------------------------------------------
    def observed_scores(self, X, alpha: float) -> np.ndarray:
        X = np.atleast_2d(X)
        quad = np.einsum("ij,jk,ik->i", X, self.Vinv, X)
        return X @ self.beta + alpha * np.sqrt(np.maximum(quad, 0.0))

    def unobserved_scores(self, arms, alpha1: float, alpha2: float) -> np.ndarray:
        M = self.mu[arms]
        quad = np.einsum("ij,jk,ik->i", M, self.Vinv, M)
        n = self.n_latent()[arms] + self.C_n[arms]
        spread = np.sqrt(self.b[arms] / (self.a[arms] * (1.0 + n)))
        return M @ self.beta + alpha1 * np.sqrt(np.maximum(quad, 0.0)) + alpha2 * spread


class HiddenLinUCB(Policy):
    """UCB on the mean-field posterior of the hidden-context model."""
    name = "HiddenLinUCB"
    uses_contexts = True

    def __init__(self, K, k, rng=None, d: int = 10, delta: float = 0.05, delta1: float = 0.025,
                 delta2: float = 0.025, S_bound: float = 1.0, a0: float = 2.0, b0: float = 1.0,
                 window: int = 100, nbIt: int = 10, alpha: Optional[float] = None,
                 alpha1: Optional[float] = None, alpha2: Optional[float] = None, random_init: bool = False):
        super().__init__(K, k, rng)
        al, al1, al2 = hidden_vi_alphas(d, delta, delta1, delta2, S_bound)
        self.alpha = al if alpha is None else alpha
        self.alpha1 = al1 if alpha1 is None else alpha1
        self.alpha2 = al2 if alpha2 is None else alpha2
        self.nbIt = nbIt
        self.state = VariationalContextState(K, d, a0, b0, window, self.rng if random_init else None)
        self.current: Dict[int, np.ndarray] = {}
        self._current_t = 0

    def ingest_contexts(self, t, contexts):
        self.current = {a: np.asarray(x, dtype=float) for a, x in contexts.items()}
        self._current_t = t
        for arm, x in self.current.items():
            self.state.add_observed(arm, x)

    def scores(self, t, arms):
        visible = self.current if self._current_t == t else {}
        obs_mask = np.array([int(a) in visible for a in arms], dtype=bool)
        out = np.empty(arms.size)
        if np.any(obs_mask):
            X = np.array([visible[int(a)] for a in arms[obs_mask]])
            out[obs_mask] = self.state.observed_scores(X, self.alpha)
        if np.any(~obs_mask):
            out[~obs_mask] = self.state.unobserved_scores(arms[~obs_mask], self.alpha1, self.alpha2)
        return out

    def learn(self, log):
        st = self.state
        for arm, r in log.rewards.items():
            if arm in log.contexts:
                st.add_selected_observed(log.contexts[arm], r)
            else:
                st.add_selected_hidden(arm, log.t, r)
        st.drop_old(log.t + 1)
        st.sweep(self.nbIt)
