"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

Backend selection: environment variable ``MPPCA_BACKEND`` set to ``"numba"``
or ``"numpy"``. Default is numba when importable, numpy otherwise. Kernels
never own RNG state; callers pass pre-drawn uniforms so results are
backend-independent (bit-identical for the CRP kernel, identical up to BLAS
summation order for the density kernel).
"""

from __future__ import annotations

import os

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))


def _numpy_simulate_crp_counts(uniforms: np.ndarray, gamma: float) -> np.ndarray:
    """Number of occupied clusters per CRP sequence, consuming uniforms[s, i].

    Vectorized over sequences; accumulation order per step matches the numba
    loop (left-to-right cumsum over cluster indices) so both backends agree.
    """
    n_seq, n = uniforms.shape
    counts = np.zeros((n_seq, n), dtype=np.int64)
    counts[:, 0] = 1
    n_clusters = np.ones(n_seq, dtype=np.int64)
    for i in range(1, n):
        denom = gamma + i
        cum = np.cumsum(counts, axis=1) / denom
        u = uniforms[:, i][:, None]
        # first cluster index whose cumulative mass exceeds u; if none, new
        hit = u < cum
        new_mask = ~hit.any(axis=1)
        idx = np.argmax(hit, axis=1)
        idx[new_mask] = n_clusters[new_mask]
        counts[np.arange(n_seq), idx] += 1
        n_clusters[new_mask] += 1
    return n_clusters


def _numpy_rank1_log_density(
    x: np.ndarray, mus: np.ndarray, ws: np.ndarray, sigma2s: np.ndarray
) -> np.ndarray:
    """Full normalized log N(x | mu_k, w_k w_k^T + sigma2_k I) for all rows/heads.

    x: (n, d); mus, ws: (k, d); sigma2s: (k,). Returns (n, k).
    """
    d = x.shape[1]
    m = np.sum(ws * ws, axis=1) + sigma2s  # (k,)
    logdet = np.log(m) + (d - 1) * np.log(sigma2s)
    # squared distances ||x - mu_k||^2 via expansion
    x_sq = np.sum(x * x, axis=1)[:, None]
    mu_sq = np.sum(mus * mus, axis=1)[None, :]
    cross = x @ mus.T
    dist_sq = x_sq + mu_sq - 2.0 * cross
    # projections w_k^T (x - mu_k)
    t = x @ ws.T - np.sum(mus * ws, axis=1)[None, :]
    quad = (dist_sq - (t * t) / m[None, :]) / sigma2s[None, :]
    return -0.5 * (d * _LOG_2PI + logdet[None, :] + quad)


def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def simulate_crp_counts(uniforms, gamma):
        n_seq, n = uniforms.shape
        out = np.empty(n_seq, dtype=np.int64)
        counts = np.zeros(n, dtype=np.int64)
        for s in range(n_seq):
            counts[:] = 0
            counts[0] = 1
            k = 1
            for i in range(1, n):
                denom = gamma + i
                u = uniforms[s, i]
                acc = 0.0
                chosen = k  # falls through to a new cluster
                for j in range(k):
                    acc += counts[j] / denom
                    if u < acc:
                        chosen = j
                        break
                if chosen == k:
                    k += 1
                counts[chosen] += 1
            out[s] = k
        return out

    @njit(cache=True)
    def rank1_log_density(x, mus, ws, sigma2s):
        n, d = x.shape
        k = mus.shape[0]
        out = np.empty((n, k))
        for j in range(k):
            m = sigma2s[j]
            for a in range(d):
                m += ws[j, a] * ws[j, a]
            logdet = np.log(m) + (d - 1) * np.log(sigma2s[j])
            base = -0.5 * (d * _LOG_2PI + logdet)
            for i in range(n):
                dist_sq = 0.0
                t = 0.0
                for a in range(d):
                    delta = x[i, a] - mus[j, a]
                    dist_sq += delta * delta
                    t += ws[j, a] * delta
                out[i, j] = base - 0.5 * (dist_sq - t * t / m) / sigma2s[j]
        return out

    return simulate_crp_counts, rank1_log_density


def _select_backend() -> str:
    choice = os.environ.get("MPPCA_BACKEND", "").strip().lower()
    if choice in ("numpy", "numba"):
        return choice
    if choice:
        raise ValueError(f"MPPCA_BACKEND must be 'numpy' or 'numba', got {choice!r}")
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


BACKEND = _select_backend()

if BACKEND == "numba":
    simulate_crp_counts, rank1_log_density = _build_numba_kernels()
else:
    simulate_crp_counts = _numpy_simulate_crp_counts
    rank1_log_density = _numpy_rank1_log_density

# always-importable references for the benchmark and equivalence tests
numpy_simulate_crp_counts = _numpy_simulate_crp_counts
numpy_rank1_log_density = _numpy_rank1_log_density
