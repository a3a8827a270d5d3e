"""Thompson sampling for temporally dependent rewards.

Two generative models, both fitted by mean-field variational inference over
the parameters and the rewards that were never observed:

* relational VAR(1): r_{i,t} = θ_iᵀ(R_{t-1}, 1) + N(0, σ²), θ_i ~ N(0, α²I),
  r_{i,1} ~ N(μ_i, σ²);
* latent state: h_t = Θh_{t-1} + N(0, δ²I), r_{i,t} = W_iᵀh_t + b_i + N(0, σ²),
  h_1 ~ N(0, δ²I), rows of Θ ~ N(0, α²I), (W_i, b_i) ~ N(0, γ²I).

Inference runs over a sliding window of the last S rounds; quantities that
left the window stay frozen at their last value. Within a sweep, latent
rewards (or states) at odd and even time steps are updated in two blocks:
given the other parity each block's coordinates are independent, so every
update is still an exact coordinate step.
"""
from __future__ import annotations

import math
from collections import deque
from typing import Optional

import numpy as np
import scipy.linalg

from ..core import Policy, RoundLog
from ..numerics import NotPositiveDefinite, inv_spd, max_eig_sym
from .contextual import NonPsdCovariance


def spectral_check(A, tol: float = 1e-9) -> bool:
    """True iff the largest eigenvalue of AᵀA is at most 1 (+tol)."""
    A = np.asarray(A, dtype=float)
    return max_eig_sym(A.T @ A) <= 1.0 + tol


def _chol_inv(A: np.ndarray):
    """Cholesky factor and inverse of an SPD matrix."""
    try:
        c = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NonPsdCovariance(str(exc)) from None
    inv = scipy.linalg.cho_solve(c, np.eye(A.shape[0]), check_finite=False)
    return c, 0.5 * (inv + inv.T)


def _parity_blocks(s_idx: np.ndarray):
    return [s_idx[s_idx % 2 == 1], s_idx[s_idx % 2 == 0]]


# ---------------------------------------------------------------- relational

class RelationalState:
    """Variational state of the VAR(1) relational model.

    Rows of ``Rm`` (1-based round index) hold E[(R_s, 1)]; ``Rv`` holds the
    variances of the latent entries (0 where observed). ``G`` is
    Σ_l E[θ_l θ_lᵀ], whose (i, j) entry is E[β_iᵀβ_j] for the columns β of Θ.
    """

    def __init__(self, K: int, sigma: float = 1.0, alpha_prior: float = 1.0,
                 mu_prior=0.0, window: Optional[int] = 200, capacity: int = 1024):
        self.K = K
        self.sigma2 = sigma * sigma
        self.alpha2 = alpha_prior * alpha_prior
        self.mu = np.broadcast_to(np.asarray(mu_prior, dtype=float), (K,)).copy()
        self.window = window
        self.t_last = 0   # last recorded round
        self.Rm = np.zeros((capacity + 1, K + 1))
        self.Rm[:, K] = 1.0
        self.Rv = np.zeros((capacity + 1, K))
        self.observed = np.zeros((capacity + 1, K), dtype=bool)
        self.obs_sum = np.zeros(K)
        self.obs_n = np.zeros(K)
        P = K + 1
        self.theta_mean = np.zeros((K, P))
        self.theta_cov = np.tile(self.alpha2 * np.eye(P), (K, 1, 1))
        self.theta_chol = np.tile(math.sqrt(self.alpha2) * np.eye(P), (K, 1, 1))
        self.G = K * self.alpha2 * np.eye(P)
        self.DtD = np.zeros((P, P))

    def _grow(self, t: int) -> None:
        if t < self.Rm.shape[0]:
            return
        extra = max(t + 1, 2 * self.Rm.shape[0]) - self.Rm.shape[0]
        pad = np.zeros((extra, self.K + 1))
        pad[:, self.K] = 1.0
        self.Rm = np.vstack([self.Rm, pad])
        self.Rv = np.vstack([self.Rv, np.zeros((extra, self.K))])
        self.observed = np.vstack([self.observed, np.zeros((extra, self.K), dtype=bool)])

    def record(self, t: int, rewards, fill=None) -> None:
        """Store round t: observed rewards exactly, missing ones initialized."""
        self._grow(t + 1)
        K = self.K
        init = np.where(self.obs_n > 0, self.obs_sum / np.maximum(self.obs_n, 1), 0.0) if fill is None else fill
        self.Rm[t, :K] = init
        self.Rv[t] = self.sigma2
        for arm, r in rewards.items():
            self.Rm[t, arm] = r
            self.Rv[t, arm] = 0.0
            self.observed[t, arm] = True
            self.obs_sum[arm] += r
            self.obs_n[arm] += 1
        self.t_last = t

    def window_start(self) -> int:
        t = self.t_last + 1
        if self.window is None:
            return 1
        return max(1, t - self.window)

    def _rebuild_dtd(self, rows: np.ndarray) -> None:
        M = self.Rm[rows]
        self.DtD = M.T @ M
        self.DtD[np.arange(self.K), np.arange(self.K)] += self.Rv[rows].sum(axis=0)

    def sweep(self, n_iter: int = 1) -> float:
        """``n_iter`` coordinate sweeps; returns the last sweep's largest change."""
        t = self.t_last + 1
        if t < 2:
            return 0.0
        K = self.K
        P = K + 1
        s0 = self.window_start()
        a = max(1, s0 - 1)
        inputs = slice(a, t - 1)                 # rows R_{s-1}
        targets = slice(a + 1, t)                # rows r_{., s}
        has_rows = t - 1 > a
        if has_rows:
            self._rebuild_dtd(np.arange(a, t - 1))
        prior_prec = np.eye(P) / self.alpha2
        s2 = self.sigma2
        change = 0.0
        for it in range(n_iter):
            final = it == n_iter - 1
            change = 0.0
            for i in range(K):
                # q(θ_i)
                try:
                    cov = inv_spd(self.DtD / s2 + prior_prec)
                except NotPositiveDefinite as exc:
                    raise NonPsdCovariance(str(exc)) from None
                if has_rows:
                    mean = cov @ (self.Rm[inputs].T @ self.Rm[targets, i]) / s2
                else:
                    mean = np.zeros(P)
                old_m = self.theta_mean[i]
                self.G += (cov - self.theta_cov[i]) + np.outer(mean, mean) - np.outer(old_m, old_m)
                if final:
                    change = max(change, float(np.max(np.abs(mean - old_m))))
                self.theta_mean[i] = mean
                self.theta_cov[i] = cov
                # q(r_{i,s}) for unobserved s in the window
                if self.observed[s0:t, i].all():
                    continue
                before = self.Rm[s0:t, i].copy() if final else None
                self._update_latents(i, s0, t)
                if final:
                    change = max(change, float(np.max(np.abs(self.Rm[s0:t, i] - before))))
                if has_rows:
                    M = self.Rm[inputs]
                    col = M.T @ M[:, i]
                    self.DtD[i, :] = col
                    self.DtD[:, i] = col
                    self.DtD[i, i] += self.Rv[inputs, i].sum()
        self._factor()
        return change

    def _factor(self) -> None:
        try:
            self.theta_chol = np.linalg.cholesky(self.theta_cov)
        except np.linalg.LinAlgError as exc:
            raise NonPsdCovariance(str(exc)) from None

    def _update_latents(self, i: int, s0: int, t: int) -> None:
        """Red-black update of the unobserved r_{i,s}, s in [s0, t-1]."""
        K = self.K
        Rm = self.Rm
        th = self.theta_mean[i]
        g_ii = self.G[i, i]
        g_i = self.G[i]
        beta_i = self.theta_mean[:, i]               # column i of E[Θ]
        for lo in (s0, s0 + 1):
            if lo > t - 1:
                continue
            cur = slice(lo, t, 2)
            fwd = Rm[lo - 1:t - 1:2] @ th
            if lo == 1:
                fwd[0] = self.mu[i]
            back = Rm[lo + 1:t + 1:2, :K] @ beta_i
            cross = Rm[cur] @ g_i - Rm[cur, i] * g_ii
            new = (fwd + back - cross) / (1.0 + g_ii)
            if (t - 1 - lo) % 2 == 0:
                # s = t-1 has no successor: forward term only
                new[-1] = fwd[-1]
            obs = self.observed[cur, i]
            Rm[cur, i] = np.where(obs, Rm[cur, i], new)
        v = np.where(self.observed[s0:t, i], 0.0, self.sigma2 / (1.0 + g_ii))
        if not self.observed[t - 1, i]:
            v[-1] = self.sigma2
        self.Rv[s0:t, i] = v

    def predictive(self, i: int, t: int):
        """q(r_{i,t-1}) moments; observed entries have zero variance."""
        return self.Rm[t - 1, i], self.Rv[t - 1, i]


class RecurrentRelationalTS(Policy):
    """Thompson sampling on the relational VAR(1) model."""
    name = "RecurrentRelationalTS"

    def __init__(self, K, k, rng=None, sigma: float = 1.0, alpha_prior: float = 1.0,
                 mu_prior=0.0, window: Optional[int] = 200, nbIt: int = 10):
        super().__init__(K, k, rng)
        self.state = RelationalState(K, sigma, alpha_prior, mu_prior, window)
        self.nbIt = nbIt
        self.sigma = sigma

    def scores(self, t, arms):
        st = self.state
        K = self.K
        if t == 1 or st.t_last < 1:
            return st.mu[arms] + self.sigma * self.rng.standard_normal(arms.size)
        R = st.Rm[t - 1].copy()
        v = st.Rv[t - 1]
        miss = v > 0
        R[:K][miss] += np.sqrt(v[miss]) * self.rng.standard_normal(int(miss.sum()))
        z = self.rng.standard_normal((arms.size, K + 1))
        theta = st.theta_mean[arms] + np.einsum("aij,aj->ai", st.theta_chol[arms], z)
        return theta @ R

    def learn(self, log: RoundLog):
        self.state.record(log.t, log.rewards)
        self.state.sweep(self.nbIt)


class FullInfoContextualTS(Policy):
    """Linear Thompson sampling per arm on the fully revealed previous reward
    vector; needs the environment to reveal every arm's reward each round."""
    name = "ContextualTS-full"
    wants_full_rewards = True

    def __init__(self, K, k, rng=None, sigma: float = 1.0, alpha_prior: float = 1.0, mu_prior=0.0):
        super().__init__(K, k, rng)
        P = K + 1
        self.sigma2 = sigma * sigma
        self.A = np.eye(P) / (alpha_prior * alpha_prior)
        self.B = np.zeros((P, K))
        self.prev: Optional[np.ndarray] = None
        self.mu = np.broadcast_to(np.asarray(mu_prior, dtype=float), (K,)).copy()
        self.sigma = sigma

    def scores(self, t, arms):
        if self.prev is None:
            return self.mu[arms] + self.sigma * self.rng.standard_normal(arms.size)
        c, _ = _chol_inv(self.A)
        mean = scipy.linalg.cho_solve(c, self.B[:, arms], check_finite=False)
        z = self.rng.standard_normal((self.K + 1, arms.size))
        theta = mean + scipy.linalg.solve_triangular(c[0].T, z, lower=False, check_finite=False)
        return theta.T @ self.prev

    def learn(self, log):
        full = log.full_rewards
        if full is None:
            raise ValueError("full-information policy needs full_rewards in each round")
        x = np.append(full, 1.0)
        if self.prev is not None:
            self.A += np.outer(self.prev, self.prev) / self.sigma2
            self.B += np.outer(self.prev, full) / self.sigma2
        self.prev = x


# ---------------------------------------------------------------- latent state

class LatentState:
    """Variational state of the latent linear-dynamical model.

    q(h_s) = N(h_mean[s], h_cov[s]); q(θ_j) for the rows of Θ share one
    covariance; q(W_i, b_i) = N(wb_mean[i], wb_cov[i]). With memory on,
    the natural parameters computed S rounds earlier replace the original
    prior for Θ rows and/or (W_i, b_i).
    """

    def __init__(self, K: int, d: int, sigma: float = 1.0, delta_lds: float = 1.0,
                 alpha_prior: float = 1.0, gamma_prior: float = 1.0, window: Optional[int] = 100,
                 mem_theta: bool = False, mem_wb: bool = False, rng=None, capacity: int = 1024):
        self.K, self.d = K, d
        self.s2 = sigma * sigma
        self.dl2 = delta_lds * delta_lds
        self.a2 = alpha_prior * alpha_prior
        self.g2 = gamma_prior * gamma_prior
        self.window = window
        self.mem_theta, self.mem_wb = mem_theta, mem_wb
        self.t_last = 0
        self.h_mean = np.zeros((capacity + 1, d))
        self.h_cov = np.tile(self.dl2 * np.eye(d), (capacity + 1, 1, 1))
        self.sel = np.zeros((capacity + 1, K), dtype=bool)
        self.rew = np.zeros((capacity + 1, K))
        self.theta_mean = np.zeros((d, d))
        self.theta_cov = self.a2 * np.eye(d)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.wb_mean = np.zeros((K, d + 1))
        # symmetry breaking: W starts at a prior draw, otherwise h and W stay at 0
        self.wb_mean[:, :d] = math.sqrt(self.g2) * rng.standard_normal((K, d))
        self.wb_cov = np.tile(self.g2 * np.eye(d + 1), (K, 1, 1))
        # carried natural parameters, one entry per decision round
        self._theta_hist: deque = deque()
        self._wb_hist: deque = deque()

    # priors ---------------------------------------------------------------
    def theta_prior(self, t: int):
        if self.mem_theta and self.window is not None:
            for tt, A, B in self._theta_hist:
                if tt == t - self.window:
                    return A, B
        return np.eye(self.d) / self.a2, np.zeros((self.d, self.d))

    def wb_prior(self, t: int):
        if self.mem_wb and self.window is not None:
            for tt, V, v in self._wb_hist:
                if tt == t - self.window:
                    return V, v
        P = self.d + 1
        return np.tile(np.eye(P) / self.g2, (self.K, 1, 1)), np.zeros((self.K, P))

    # data -----------------------------------------------------------------
    def _grow(self, t: int) -> None:
        n = self.h_mean.shape[0]
        if t < n:
            return
        extra = max(t + 1, 2 * n) - n
        self.h_mean = np.vstack([self.h_mean, np.zeros((extra, self.d))])
        self.h_cov = np.concatenate([self.h_cov, np.tile(self.dl2 * np.eye(self.d), (extra, 1, 1))])
        self.sel = np.vstack([self.sel, np.zeros((extra, self.K), dtype=bool)])
        self.rew = np.vstack([self.rew, np.zeros((extra, self.K))])

    def record(self, t: int, rewards) -> None:
        self._grow(t)
        for arm, r in rewards.items():
            self.sel[t, arm] = True
            self.rew[t, arm] = r
        self.t_last = t

    def window_start(self) -> int:
        t = self.t_last + 1
        return 1 if self.window is None else max(1, t - self.window)

    def n_parameters(self) -> int:
        """d² + d(rounds in window) + K(d+1)."""
        return self.d * self.d + self.d * (self.t_last - self.window_start() + 1) + self.K * (self.d + 1)

    # moments --------------------------------------------------------------
    def _wb_second(self):
        return self.wb_cov + np.einsum("ka,kb->kab", self.wb_mean, self.wb_mean)

    def _theta_second(self):
        return self.d * self.theta_cov + self.theta_mean.T @ self.theta_mean

    # updates --------------------------------------------------------------
    def _update_h(self, s: np.ndarray, t: int) -> None:
        d = self.d
        Ewb2 = self._wb_second()
        EWW = Ewb2[:, :d, :d].reshape(self.K, d * d)
        EWb = Ewb2[:, :d, d]
        EW = self.wb_mean[:, :d]
        sel = self.sel[s].astype(float)
        F = np.tile(np.eye(d) / self.dl2, (s.size, 1, 1)) + (sel @ EWW).reshape(-1, d, d) / self.s2
        g = ((sel * self.rew[s]) @ EW - sel @ EWb) / self.s2
        has_prev = s > 1
        if np.any(has_prev):
            g[has_prev] += self.h_mean[s[has_prev] - 1] @ self.theta_mean.T / self.dl2
        has_next = s < t - 1
        if np.any(has_next):
            F[has_next] += self._theta_second() / self.dl2
            g[has_next] += self.h_mean[s[has_next] + 1] @ self.theta_mean / self.dl2
        cov = np.linalg.inv(F)
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
        self.h_cov[s] = cov
        self.h_mean[s] = np.einsum("sab,sb->sa", cov, g)

    def _update_theta(self, trans: np.ndarray, t: int) -> None:
        A0, B0 = self.theta_prior(t)
        if trans.size:
            Hp = self.h_mean[trans - 1]
            Hs = self.h_mean[trans]
            S = Hp.T @ Hp + self.h_cov[trans - 1].sum(axis=0)
            A = A0 + S / self.dl2
            B = B0 + (Hs.T @ Hp) / self.dl2    # row j: Σ h_s[j] h_{s-1}
        else:
            A, B = A0, B0
        c, cov = _chol_inv(A)
        self.theta_cov = cov
        self.theta_mean = scipy.linalg.cho_solve(c, B.T, check_finite=False).T
        self._theta_nat = (A, B)

    def _update_wb(self, rows: np.ndarray, t: int) -> None:
        d = self.d
        V0, v0 = self.wb_prior(t)
        if rows.size:
            Hm = np.hstack([self.h_mean[rows], np.ones((rows.size, 1))])
            S = np.einsum("sa,sb->sab", Hm, Hm)
            S[:, :d, :d] += self.h_cov[rows]
            sel = self.sel[rows].astype(float)
            V = V0 + np.einsum("sk,sab->kab", sel, S) / self.s2
            v = v0 + ((sel * self.rew[rows]).T @ Hm) / self.s2
        else:
            V, v = V0, v0
        cov = np.linalg.inv(V)
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
        self.wb_cov = cov
        self.wb_mean = np.einsum("kab,kb->ka", cov, v)
        self._wb_nat = (V, v)

    def fit_parameters(self) -> None:
        """q(Θ) and q(W_i, b_i) given the current q(h) over the window."""
        t = self.t_last + 1
        win = np.arange(self.window_start(), t)
        self._update_theta(win[win >= 2], t)
        self._update_wb(win, t)

    def sweep(self, n_iter: int = 1) -> float:
        t = self.t_last + 1
        if t < 2:
            return 0.0
        s0 = self.window_start()
        win = np.arange(s0, t)
        change = 0.0
        for _ in range(n_iter):
            before = np.concatenate([self.h_mean[win].ravel(), self.theta_mean.ravel(), self.wb_mean.ravel()])
            for block in _parity_blocks(win):
                if block.size:
                    self._update_h(block, t)
            self.fit_parameters()
            after = np.concatenate([self.h_mean[win].ravel(), self.theta_mean.ravel(), self.wb_mean.ravel()])
            change = float(np.max(np.abs(after - before)))
        self._remember(t)
        return change

    def _remember(self, t: int) -> None:
        if self.window is None:
            return
        if self.mem_theta:
            self._theta_hist.append((t, *self._theta_nat))
            while self._theta_hist and self._theta_hist[0][0] < t - self.window:
                self._theta_hist.popleft()
        if self.mem_wb:
            self._wb_hist.append((t, *self._wb_nat))
            while self._wb_hist and self._wb_hist[0][0] < t - self.window:
                self._wb_hist.popleft()


class RecurrentStateTS(Policy):
    """Thompson sampling on the latent linear-dynamical model."""
    name = "RecurrentStateTS"

    def __init__(self, K, k, rng=None, d: int = 4, sigma: float = 1.0, delta_lds: float = 1.0,
                 alpha_prior: float = 1.0, gamma_prior: float = 1.0, window: Optional[int] = 100,
                 nbIt: int = 10, mem_theta: bool = True, mem_wb: bool = True):
        super().__init__(K, k, rng)
        self.state = LatentState(K, d, sigma, delta_lds, alpha_prior, gamma_prior, window,
                                 mem_theta, mem_wb, rng=self.rng)
        self.nbIt = nbIt

    def _draw_wb(self, arms):
        st = self.state
        L = np.linalg.cholesky(st.wb_cov[arms])
        z = self.rng.standard_normal((arms.size, st.d + 1))
        return st.wb_mean[arms] + np.einsum("kab,kb->ka", L, z)

    def scores(self, t, arms):
        st = self.state
        d = st.d
        if t == 1 or st.t_last < 1:
            h = math.sqrt(st.dl2) * self.rng.standard_normal(d)
        else:
            h = st.h_mean[t - 1] + np.linalg.cholesky(st.h_cov[t - 1]) @ self.rng.standard_normal(d)
        Lt = np.linalg.cholesky(st.theta_cov)
        theta = st.theta_mean + self.rng.standard_normal((d, d)) @ Lt.T
        wb = self._draw_wb(arms)
        return wb[:, :d] @ (theta @ h) + wb[:, d]

    def learn(self, log):
        self.state.record(log.t, log.rewards)
        self.state.sweep(self.nbIt)
