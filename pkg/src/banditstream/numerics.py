"""Seeded sampling and small dense linear algebra.

Random streams are numpy ``Generator`` objects. Child streams are derived by
mixing a base seed with stream indices through a splitmix64 finalizer, so a
(seed, index) pair always maps to the same independent generator.
"""
from __future__ import annotations

import functools

import numpy as np
import scipy.linalg
import scipy.linalg.lapack
import scipy.special

_MASK64 = (1 << 64) - 1


class NotPositiveDefinite(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class InvalidParameter(ValueError):
    pass


class DomainError(ValueError):
    pass


Rng = np.random.Generator


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, *indices: int) -> int:
    """Fold stream indices into a 64-bit seed, one splitmix round per index."""
    s = splitmix64(int(base_seed) & _MASK64)
    for i in indices:
        s = splitmix64(s ^ splitmix64(int(i) & _MASK64))
    return s


def make_rng(base_seed: int, *indices: int) -> Rng:
    return np.random.default_rng(derive_seed(base_seed, *indices))


# ---------------------------------------------------------------- linear algebra

def _as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def chol(m) -> np.ndarray:
    """Lower Cholesky factor, raising NotPositiveDefinite on a non-positive pivot."""
    m = _as_square(m)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def solve_spd(m, v) -> np.ndarray:
    m = _as_square(m)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != m.shape[0]:
        raise DimensionMismatch(f"matrix is {m.shape}, rhs is {v.shape}")
    try:
        factor = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return scipy.linalg.cho_solve(factor, v, check_finite=False)


def inv_spd(m) -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor (LAPACK potrf/potri)."""
    m = _as_square(m)
    c, info = scipy.linalg.lapack.dpotrf(m, lower=1, clean=0)
    if info > 0:
        raise NotPositiveDefinite(f"leading minor {info} is not positive")
    inv, info = scipy.linalg.lapack.dpotri(c, lower=1)
    if info != 0:
        raise NotPositiveDefinite("singular Cholesky factor")
    iu = _upper_indices(m.shape[0])
    inv[iu] = inv.T[iu]
    return inv


@functools.lru_cache(maxsize=64)
def _upper_indices(n: int):
    return np.triu_indices(n, 1)


def logdet_spd(m) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol(m)))))


def quad_form_inv(m, x) -> float:
    """xᵀ m⁻¹ x for SPD m."""
    x = np.asarray(x, dtype=float)
    return float(x @ solve_spd(m, x))


# ---------------------------------------------------------------- samplers

def sample_mvn(rng: Rng, mean, cov) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    cov = _as_square(cov)
    if cov.shape[0] != mean.shape[0]:
        raise DimensionMismatch(f"mean has {mean.shape[0]} dims, cov is {cov.shape}")
    L = chol(cov)
    return mean + L @ rng.standard_normal(mean.shape[0])


def sample_mvn_precision(rng: Rng, mean, precision) -> np.ndarray:
    """Draw from N(mean, precision⁻¹) without forming the inverse."""
    mean = np.asarray(mean, dtype=float)
    L = chol(precision)
    z = rng.standard_normal(mean.shape[0])
    return mean + scipy.linalg.solve_triangular(L.T, z, lower=False, check_finite=False)


def sample_gamma(rng: Rng, shape: float, rate: float) -> float:
    if not (shape > 0 and rate > 0):
        raise InvalidParameter(f"gamma needs shape>0 and rate>0, got {shape}, {rate}")
    # numpy's standard_gamma is Marsaglia-Tsang with the shape<1 boost
    return float(rng.standard_gamma(shape) / rate)


def norm_inv_cdf(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    return float(scipy.special.ndtri(p))


def chi2_inv_cdf(p: float, dof: int) -> float:
    if dof < 1:
        raise DomainError(f"dof must be >= 1, got {dof}")
    if p == 0.0:
        return 0.0
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in [0, 1), got {p}")
    return float(2.0 * scipy.special.gammaincinv(dof / 2.0, p))


class TruncatedGaussian:
    """Componentwise N(mean_j, sd²) restricted to [mean_j - w_j, mean_j + w_j].

    w_j = bound/√d - |mean_j|, so every draw lies in the cube of half-side
    bound/√d and has norm at most ``bound``. Draws are by rejection; windows
    too narrow for it (acceptance below 1e-3) use a uniform draw in the
    window. A 2-D ``mean`` holds one vector per row. Windows and acceptance
    rates are computed once, so repeated draws are cheap.
    """

    def __init__(self, mean, sd: float, bound: float, max_tries: int = 1000):
        mean = np.asarray(mean, dtype=float)
        self.shape = mean.shape if mean.ndim else (1,)
        self.mean = mean.reshape(self.shape)
        self.sd = float(sd)
        self.max_tries = max_tries
        w = bound / np.sqrt(self.shape[-1]) - np.abs(self.mean)
        if np.any(w < -1e-12):
            raise InvalidParameter("some |mean_j| exceeds bound/sqrt(d)")
        self.w = np.maximum(w, 0.0)
        if self.sd > 0:
            accept = scipy.special.ndtr(self.w / sd) - scipy.special.ndtr(-self.w / sd)
        else:
            accept = np.ones(self.shape)
        self.rejection = (self.w > 0) & (accept >= 1e-3) & (self.sd > 0)
        self.uniform = (self.w > 0) & (accept < 1e-3) & (self.sd > 0)

    def sample(self, rng: Rng, rows=None) -> np.ndarray:
        """One draw for every row, or for the given rows of a 2-D mean."""
        if rows is None:
            mean, w, rej, uni = self.mean, self.w, self.rejection, self.uniform
        else:
            mean, w, rej, uni = self.mean[rows], self.w[rows], self.rejection[rows], self.uniform[rows]
        shape = mean.shape
        mean, w, rej, uni = mean.ravel(), w.ravel(), rej.ravel(), uni.ravel()
        out = mean.copy()
        if np.any(uni):
            out[uni] = mean[uni] + rng.uniform(-1.0, 1.0, int(uni.sum())) * w[uni]
        todo = np.flatnonzero(rej)
        tries = 0
        while todo.size and tries < self.max_tries:
            # candidates per entry double each pass, so stragglers finish in a few passes
            m = min(2 << min(tries.bit_length(), 20), self.max_tries - tries)
            z = rng.standard_normal((todo.size, m)) * self.sd
            ok = np.abs(z) <= w[todo, None]
            hit = ok.any(axis=1)
            first = ok.argmax(axis=1)
            out[todo[hit]] = mean[todo[hit]] + z[hit, first[hit]]
            todo = todo[~hit]
            tries += m
        if todo.size:
            out[todo] = mean[todo] + rng.uniform(-1.0, 1.0, todo.size) * w[todo]
        return out.reshape(shape)


def sample_truncated_gaussian(rng: Rng, mean, sd: float, bound: float,
                              max_tries: int = 1000) -> np.ndarray:
    """One draw of ``TruncatedGaussian(mean, sd, bound)``."""
    return TruncatedGaussian(mean, sd, bound, max_tries).sample(rng)


def max_eig_sym(m) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    m = _as_square(m)
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[-1])
