"""Signal-to-noise analysis of dimension-reduced two-category classification.

For two equal-covariance Gaussian categories, the sample discrimination
index alpha_q compares squared distances to the two categories' rank-q
principal subspaces. This module provides the closed-form moments of
alpha_q, the SNR, the eigenvalue inequality deciding whether a dimension
belongs in the representation, the one-sided Chebyshev accuracy bound, the
limiting (sigma2 -> 0) subspace classifier, and Monte Carlo oracles that
validate all of the above by brute force.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateConfigError(ValueError):
    """Raised when a formula's denominator carries no mass."""


@dataclass(frozen=True)
class TwoCategorySpec:
    """Two categories sharing one covariance spectrum.

    eigvals must be positive and descending; eigvecs columns orthonormal.
    """

    mu_a: np.ndarray
    mu_b: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu_a", np.asarray(self.mu_a, dtype=float))
        object.__setattr__(self, "mu_b", np.asarray(self.mu_b, dtype=float))
        object.__setattr__(self, "eigvals", np.asarray(self.eigvals, dtype=float))
        object.__setattr__(self, "eigvecs", np.asarray(self.eigvecs, dtype=float))
        d = self.mu_a.shape[0]
        if self.mu_b.shape != (d,) or self.eigvals.shape != (d,) or self.eigvecs.shape != (d, d):
            raise ValueError("inconsistent dimensions")
        if np.any(np.diff(self.eigvals) > 1e-12):
            raise ValueError("eigvals must be descending")
        if np.any(self.eigvals <= 0):
            raise ValueError("eigvals must be positive")
        if not np.allclose(self.eigvecs.T @ self.eigvecs, np.eye(d), atol=1e-10):
            raise ValueError("eigvecs must be orthonormal")

    @property
    def d(self) -> int:
        return self.mu_a.shape[0]

    def covariance(self) -> np.ndarray:
        return (self.eigvecs * self.eigvals) @ self.eigvecs.T


@dataclass(frozen=True)
class InfoDecomposition:
    """Squared prototype distance r_ab split across eigen-directions."""

    r_ab: float
    r: np.ndarray


def info_decomposition(spec: TwoCategorySpec) -> InfoDecomposition:
    """r_i = ((mu_a - mu_b) . u_i)^2; the r_i sum to ||mu_a - mu_b||^2."""
    delta = spec.mu_a - spec.mu_b
    r = (delta @ spec.eigvecs) ** 2
    return InfoDecomposition(r_ab=float(delta @ delta), r=r)


def alpha_moments(q: int, decomp: InfoDecomposition, eigvals: np.ndarray) -> tuple[float, float]:
    """Exact mean and variance of the discrimination index alpha_q.

    E[alpha] = r_ab - sum_{i<=q} r_i and Var[alpha] = 4 sum_{i>q} lambda_i r_i.
    """
    eigvals = np.asarray(eigvals, dtype=float)
    d = eigvals.shape[0]
    if not 0 <= q <= d - 1:
        raise ValueError(f"q must be in [0, {d - 1}], got {q}")
    mean = decomp.r_ab - float(np.sum(decomp.r[:q]))
    var = 4.0 * float(np.sum(eigvals[q:] * decomp.r[q:]))
    return mean, var


def snr_analytic(q: int, decomp: InfoDecomposition, eigvals: np.ndarray) -> float:
    """SNR_q = E[alpha_q]^2 / Var[alpha_q] in closed form.

    When no information remains past q, both moments vanish and the ratio is
    taken as 0 (no signal). A zero variance with nonzero mean — possible only
    with zero eigenvalues — has no finite value and is reported as degenerate.
    """
    mean, var = alpha_moments(q, decomp, eigvals)
    if var <= 0:
        if mean == 0:
            return 0.0
        raise DegenerateConfigError("degenerate: no residual information noise")
    return mean * mean / var


def drop_condition(q: int, decomp: InfoDecomposition, eigvals: np.ndarray) -> bool:
    """Eigenvalue inequality for the (q+1)-th direction (0-based index q):

        lambda_{q+1} < (r_{q+1} / R + 2) * (sum_{i>=q+2} r_i lambda_i / R),
        R = sum_{i>=q+2} r_i.

    Orientation, established by the analytic/Monte-Carlo cross-check in
    ``orientation_report`` (see also ``cli theory-check``): the condition is
    True exactly when SNR_q > SNR_{q+1}, i.e. when the direction carries
    enough cross-category information relative to its within-category
    variance that it should stay OUT of the rank-(q+1) representation and
    keep contributing to the discrimination residual.
    """
    eigvals = np.asarray(eigvals, dtype=float)
    d = eigvals.shape[0]
    if not 0 <= q <= d - 2:
        raise ValueError(f"q must be in [0, {d - 2}], got {q}")
    # candidate direction is array index q (the (q+1)-th in 1-based counting)
    tail_r = float(np.sum(decomp.r[q + 1 :]))
    if tail_r <= 0:
        raise DegenerateConfigError("condition undefined: no information beyond the candidate dimension")
    tail_rl = float(np.sum(decomp.r[q + 1 :] * eigvals[q + 1 :]))
    rhs = (decomp.r[q] / tail_r + 2.0) * (tail_rl / tail_r)
    return bool(eigvals[q] < rhs)


def accuracy_lower_bound(snr: float) -> float:
    """One-sided Chebyshev bound on classifier accuracy: SNR / (1 + SNR)."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return snr / (1.0 + snr)


def _residual_sq_dist(x: np.ndarray, mu: np.ndarray, basis_q: np.ndarray) -> np.ndarray:
    """Squared distance to the affine subspace mu + span(basis_q columns)."""
    delta = np.atleast_2d(x) - mu
    if basis_q.shape[1]:
        delta = delta - (delta @ basis_q) @ basis_q.T
    return np.einsum("nd,nd->n", delta, delta)


def pca_classifier_prob(x: np.ndarray, spec: TwoCategorySpec, q: int) -> float:
    """P(category a | x) for the zero-noise subspace classifier,
    sigmoid(tau_q(x, mu_b) - tau_q(x, mu_a)) with tau_q the squared residual
    distance after projecting out the first q eigen-directions."""
    if not 0 <= q < spec.d:
        raise ValueError(f"q must be in [0, {spec.d - 1}], got {q}")
    basis = spec.eigvecs[:, :q]
    tau_a = _residual_sq_dist(x, spec.mu_a, basis)
    tau_b = _residual_sq_dist(x, spec.mu_b, basis)
    alpha = tau_b - tau_a
    prob = 1.0 / (1.0 + np.exp(-alpha))
    return float(prob[0]) if np.asarray(x).ndim == 1 else prob


def sample_category(spec: TwoCategorySpec, n: int, rng, which: str = "a") -> np.ndarray:
    """n draws from N(mu_which, Sigma) via the eigenbasis."""
    gen = np.random.default_rng(rng)
    mu = spec.mu_a if which == "a" else spec.mu_b
    g = gen.standard_normal((n, spec.d))
    return mu + (g * np.sqrt(spec.eigvals)) @ spec.eigvecs.T


def mc_alpha_moments(
    spec: TwoCategorySpec, q: int, n_draws: int = 1_000_000, rng=0, batch: int = 250_000
):
    """Monte Carlo estimate of (mean, var) of alpha_q plus their standard errors.

    Independent of the closed form: draws x ~ N(mu_a, Sigma) and evaluates
    alpha through a dense residual projector. alpha is Gaussian in x, so
    se(var) uses the exact-normal formula var * sqrt(2 / (n - 1)).
    """
    gen = np.random.default_rng(rng)
    basis = spec.eigvecs[:, :q]
    proj_resid = np.eye(spec.d) - basis @ basis.T
    total, total_sq, count = 0.0, 0.0, 0
    remaining = n_draws
    while remaining > 0:
        m = min(batch, remaining)
        x = sample_category(spec, m, gen, "a")
        a_b = np.einsum("nd,nd->n", (x - spec.mu_b) @ proj_resid, (x - spec.mu_b) @ proj_resid)
        a_a = np.einsum("nd,nd->n", (x - spec.mu_a) @ proj_resid, (x - spec.mu_a) @ proj_resid)
        alpha = a_b - a_a
        total += float(np.sum(alpha))
        total_sq += float(np.sum(alpha * alpha))
        count += m
        remaining -= m
    mean = total / count
    var = (total_sq - count * mean * mean) / (count - 1)
    se_mean = np.sqrt(var / count)
    se_var = var * np.sqrt(2.0 / (count - 1))
    return mean, var, se_mean, se_var


def mc_classifier_accuracy(spec: TwoCategorySpec, q: int, n_draws: int = 100_000, rng=0) -> tuple[float, float]:
    """Monte Carlo accuracy of the rank-q subspace classifier and its
    binomial standard error. Symmetric categories, so draws come from a."""
    gen = np.random.default_rng(rng)
    basis = spec.eigvecs[:, :q]
    x = sample_category(spec, n_draws, gen, "a")
    alpha = _residual_sq_dist(x, spec.mu_b, basis) - _residual_sq_dist(x, spec.mu_a, basis)
    acc = float(np.mean(alpha > 0))
    se = float(np.sqrt(max(acc * (1 - acc), 1e-12) / n_draws))
    return acc, se


def random_two_category_spec(d: int, rng, scale: float = 1.5) -> TwoCategorySpec:
    """Random spec: gamma-distributed descending spectrum, Haar-ish basis,
    Gaussian prototypes."""
    gen = np.random.default_rng(rng)
    eigvals = np.sort(gen.gamma(2.0, 1.0, size=d) + 0.05)[::-1]
    qmat, rmat = np.linalg.qr(gen.standard_normal((d, d)))
    qmat = qmat * np.sign(np.diag(rmat))
    mu_a = gen.normal(scale=scale, size=d)
    mu_b = gen.normal(scale=scale, size=d)
    return TwoCategorySpec(mu_a=mu_a, mu_b=mu_b, eigvals=eigvals, eigvecs=qmat)


def orientation_report(n_configs: int = 1000, d_range=(3, 8), rng=0, rel_tol: float = 1e-9) -> dict:
    """Cross-check the drop condition against the analytic SNR ordering.

    For every non-degenerate (config, q) pair, records whether the condition
    truth value matches sign(SNR_q - SNR_{q+1}) under a single global
    orientation. Returns counts and the orientation that held.
    """
    gen = np.random.default_rng(rng)
    n_checked = 0
    n_true_with_greater = 0
    n_mismatch = 0
    for _ in range(n_configs):
        d = int(gen.integers(d_range[0], d_range[1] + 1))
        spec = random_two_category_spec(d, gen)
        decomp = info_decomposition(spec)
        for q in range(d - 1):
            tail_r = float(np.sum(decomp.r[q + 1 :]))
            if tail_r <= rel_tol or decomp.r[q] <= rel_tol:
                continue
            snr_q = snr_analytic(q, decomp, spec.eigvals)
            snr_q1 = snr_analytic(q + 1, decomp, spec.eigvals)
            if abs(snr_q - snr_q1) <= rel_tol * max(1.0, snr_q, snr_q1):
                continue
            cond = drop_condition(q, decomp, spec.eigvals)
            n_checked += 1
            if cond == (snr_q > snr_q1):
                n_true_with_greater += 1
            else:
                n_mismatch += 1
    return {
        "n_checked": n_checked,
        "n_consistent": n_true_with_greater,
        "n_mismatch": n_mismatch,
        "orientation": "condition_true_iff_snr_q_greater_than_snr_q_plus_1",
        "agreement": n_true_with_greater / n_checked if n_checked else float("nan"),
    }
