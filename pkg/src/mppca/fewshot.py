"""One-shot new-category and instructed-subcategory predictive densities.

A single observation of a brand-new category says nothing about its
strong-generalization direction, so the direction is inherited from the
fitted hierarchy: the predictive is a mixture over the shared components,
x ~ N(x1, sigma2 I + nu_j nu_j^T). A subcategory instead reuses its parent
category's local direction, pinned at a latent score z_sub.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import logsumexp

from . import ppca
from ._kernels import rank1_log_density

if TYPE_CHECKING:  # pragma: no cover
    from .dpmix import MixtureModel

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class NewCategoryPredictive:
    """One mixture term: Gaussian centered at the single observation with
    covariance sigma2 I + pc pc^T."""

    mean: np.ndarray
    pc: np.ndarray
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "pc", np.asarray(self.pc, dtype=float))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if self.mean.shape != self.pc.shape or self.mean.ndim != 1:
            raise ValueError("mean and pc must be d-vectors")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def log_density(self, x: np.ndarray) -> np.ndarray | float:
        params = ppca.PpcaParams(mu=self.mean, W=self.pc[:, None], sigma2=self.sigma2)
        return ppca.marginal_log_density(x, params)


@dataclass(frozen=True)
class NewCategoryMixture:
    """Component-posterior-weighted mixture of NewCategoryPredictive terms."""

    weights: np.ndarray
    terms: tuple

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "terms", tuple(self.terms))
        if weights.shape != (len(self.terms),) or len(self.terms) == 0:
            raise ValueError("need one weight per mixture term")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")

    def log_density(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = x[None, :] if single else x
        mus = np.array([t.mean for t in self.terms])
        pcs = np.array([t.pc for t in self.terms])
        s2s = np.array([t.sigma2 for t in self.terms])
        dens = rank1_log_density(xs, mus, pcs, s2s) + np.log(self.weights)[None, :]
        out = logsumexp(dens, axis=1)
        return float(out[0]) if single else out


def new_category_predictive(x1: np.ndarray, context: "MixtureModel") -> NewCategoryMixture:
    """Predictive for a category observed exactly once, inheriting each
    shared component nu_j with weight proportional to how many categories
    own it; the noise variance is the mean across context categories."""
    if context.n_components == 0 or context.n_categories == 0:
        raise ValueError("context model has no fitted components")
    x1 = np.asarray(x1, dtype=float)
    if x1.shape != (context.d,):
        raise ValueError(f"x1 must have shape ({context.d},)")
    owner_counts = np.bincount(np.asarray(context.ownership), minlength=context.n_components)
    weights = owner_counts / owner_counts.sum()
    sigma2 = context.mean_sigma2()
    terms = [NewCategoryPredictive(mean=x1, pc=nu, sigma2=sigma2) for nu in context.global_components]
    return NewCategoryMixture(weights=weights, terms=terms)


@dataclass(frozen=True)
class SubcategorySpec:
    """A subcategory pinned at latent score z_sub on the parent's local
    direction. p1 is the Bernoulli weight of the two-component latent
    mixture z = s*z1 + (1-s)*z2 used when sampling subcategory prototypes;
    the marginal of z stays standard normal for any p1."""

    parent: ppca.PpcaParams
    z_sub: float
    p1: float = 0.5
    sigma2: float | None = None  # defaults to the parent's noise variance

    def __post_init__(self):
        object.__setattr__(self, "z_sub", float(self.z_sub))
        object.__setattr__(self, "p1", float(self.p1))
        if self.parent.q != 1:
            raise ValueError("parent must be a rank-1 category")
        if not 0.0 <= self.p1 <= 1.0:
            raise ValueError("p1 must lie in [0, 1]")
        if self.sigma2 is not None:
            object.__setattr__(self, "sigma2", float(self.sigma2))
            if not self.sigma2 > 0:
                raise ValueError("sigma2 must be positive")

    @property
    def center(self) -> np.ndarray:
        return self.parent.mu + self.parent.W[:, 0] * self.z_sub

    @property
    def effective_sigma2(self) -> float:
        return self.parent.sigma2 if self.sigma2 is None else self.sigma2


def subcategory_log_density(x: np.ndarray, spec: SubcategorySpec) -> np.ndarray | float:
    """Isotropic Gaussian at mu_parent + w_parent * z_sub."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = x[None, :] if single else x
    d = spec.parent.d
    if xs.shape[1] != d:
        raise ValueError(f"x must have dimension {d}")
    s2 = spec.effective_sigma2
    delta = xs - spec.center
    out = -0.5 * (d * (_LOG_2PI + math.log(s2)) + np.einsum("nd,nd->n", delta, delta) / s2)
    return float(out[0]) if single else out


def sample_latent_mixture(spec: SubcategorySpec, n: int, rng=0) -> np.ndarray:
    """Draw z = s*z1 + (1-s)*z2 with s ~ Bernoulli(p1) and z1, z2 standard
    normal: the two-component construction whose marginal is N(0, 1)."""
    gen = np.random.default_rng(rng)
    z1 = gen.standard_normal(n)
    z2 = gen.standard_normal(n)
    s = gen.random(n) < spec.p1
    return np.where(s, z1, z2)
