"""Probabilistic PCA category representation.

A category is a Gaussian with covariance W W^T + sigma2 I: the columns of W
are directions along which category membership tolerates large variation,
and sigma2 is the isotropic residual noise. Provides the marginal density
(low-rank route), the latent posterior, closed-form maximum-likelihood
fitting, and sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

_LOG_2PI = float(np.log(2.0 * np.pi))


class DegenerateDataError(ValueError):
    """Raised when data carries no variance to fit."""


@dataclass(frozen=True)
class PpcaParams:
    """One category: prototype mu (d,), loading W (d, q), noise variance sigma2.

    q may be 0 (no strong-generalization direction; the density is isotropic).
    """

    mu: np.ndarray
    W: np.ndarray
    sigma2: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if mu.ndim != 1:
            raise ValueError("mu must be a vector")
        if W.shape[0] != mu.shape[0]:
            raise ValueError(f"W has {W.shape[0]} rows, expected d={mu.shape[0]}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def q(self) -> int:
        return self.W.shape[1]

    def covariance(self) -> np.ndarray:
        """Dense d x d covariance W W^T + sigma2 I."""
        return self.W @ self.W.T + self.sigma2 * np.eye(self.d)


@dataclass(frozen=True)
class LatentPosterior:
    """Gaussian posterior over the latent coordinates z given one observation."""

    mean: np.ndarray
    cov: np.ndarray


def marginal_log_density(x: np.ndarray, params: PpcaParams) -> np.ndarray | float:
    """Normalized Gaussian log-density of x under N(mu, W W^T + sigma2 I).

    Uses the low-rank inversion and determinant identities: one O(q^3)
    factorization of M = W^T W + sigma2 I, then O(d q) work per point.
    Agrees with the dense-covariance computation to machine precision.

    x may be a single vector (d,) or a stack of rows (n, d); the return
    matches (scalar or (n,) array).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = x[None, :] if single else x
    if xs.shape[1] != params.d:
        raise ValueError(f"x has dimension {xs.shape[1]}, expected {params.d}")
    d, q, s2 = params.d, params.q, params.sigma2
    delta = xs - params.mu
    dist_sq = np.einsum("nd,nd->n", delta, delta)
    if q == 0:
        quad = dist_sq / s2
        logdet = d * np.log(s2)
    else:
        M = params.W.T @ params.W + s2 * np.eye(q)
        cho = scipy.linalg.cho_factor(M, lower=True)
        t = delta @ params.W  # (n, q)
        quad = (dist_sq - np.einsum("nq,nq->n", t, scipy.linalg.cho_solve(cho, t.T).T)) / s2
        logdet = 2.0 * np.sum(np.log(np.diag(cho[0]))) + (d - q) * np.log(s2)
    out = -0.5 * (d * _LOG_2PI + logdet + quad)
    return float(out[0]) if single else out


def latent_posterior(x: np.ndarray, params: PpcaParams) -> LatentPosterior:
    """Posterior of the latent z given x: N(M^-1 W^T (x-mu), sigma2 M^-1).

    M = W^T W + sigma2 I. The covariance does not depend on x.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d,):
        raise ValueError(f"x must have shape ({params.d},), got {x.shape}")
    q, s2 = params.q, params.sigma2
    M = params.W.T @ params.W + s2 * np.eye(q)
    M_inv = np.linalg.inv(M)
    M_inv = 0.5 * (M_inv + M_inv.T)
    mean = M_inv @ (params.W.T @ (x - params.mu))
    return LatentPosterior(mean=mean, cov=s2 * M_inv)


def _canonical_eig_order(eigvals: np.ndarray, eigvecs: np.ndarray, tol: float = 1e-12):
    """Descending eigenvalues; sign-normalize eigenvectors (first nonzero
    component positive) and break exact ties lexicographically so fits are
    deterministic."""
    order = np.argsort(eigvals)[::-1]
    vals = eigvals[order]
    vecs = eigvecs[:, order]
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        nonzero = np.nonzero(np.abs(col) > tol)[0]
        if nonzero.size and col[nonzero[0]] < 0:
            vecs[:, j] = -col
    # reorder within groups of equal eigenvalues
    j = 0
    d = vals.shape[0]
    while j < d:
        k = j + 1
        while k < d and abs(vals[k] - vals[j]) <= tol * max(1.0, abs(vals[j])):
            k += 1
        if k - j > 1:
            group = vecs[:, j:k]
            sort_idx = sorted(range(k - j), key=lambda i: tuple(group[:, i]), reverse=True)
            vecs[:, j:k] = group[:, sort_idx]
        j = k
    return vals, vecs


def fit_mle(data: np.ndarray, q: int) -> PpcaParams:
    """Closed-form maximum-likelihood PPCA fit with q retained directions.

    mu is the sample mean. The sample covariance (divisor N-1) is
    eigendecomposed; sigma2 is the average of the d-q discarded eigenvalues;
    W = U_q (Lambda_q - sigma2 I)^(1/2), with each retained eigenvalue gap
    clamped at zero before the square root.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be an (N, d) matrix")
    n, d = data.shape
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    if not 0 <= q < d:
        raise ValueError(f"q must satisfy 0 <= q < d={d}, got {q}")
    mu = data.mean(axis=0)
    centered = data - mu
    S = centered.T @ centered / (n - 1)
    if not np.any(np.diag(S) > 0):
        raise DegenerateDataError("data has zero variance in every dimension")
    vals, vecs = np.linalg.eigh(S)
    vals, vecs = _canonical_eig_order(vals, vecs)
    sigma2 = float(np.mean(vals[q:]))
    if sigma2 <= 0:
        # all residual variance sits in the retained directions
        sigma2 = np.finfo(float).tiny
    scales = np.sqrt(np.clip(vals[:q] - sigma2, 0.0, None))
    W = vecs[:, :q] * scales[None, :]
    return PpcaParams(mu=mu, W=W, sigma2=sigma2)


def sample(params: PpcaParams, n: int, rng) -> np.ndarray:
    """Draw n observations x = W z + mu + eps; rng is a seed or Generator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = np.random.default_rng(rng)
    z = gen.standard_normal((n, params.q))
    eps = gen.standard_normal((n, params.d)) * np.sqrt(params.sigma2)
    return params.mu + z @ params.W.T + eps
