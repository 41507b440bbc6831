"""Hierarchical infinite mixture of rank-1 PPCA categories.

Two stacked Chinese-restaurant processes: the lower level assigns
observations to categories (each a rank-1 PPCA Gaussian), the upper level
assigns each category's loading direction w_c to a shared global component
nu_j, so generalization patterns transfer across categories. Provides the
priors, the ancestral generative process, supervised and unsupervised
fitting, the predictive category classifier, and JSON serialization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from . import ppca
from ._kernels import rank1_log_density, simulate_crp_counts
from .datatypes import Dataset, Prediction

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Hyperparams:
    """Concentrations, precisions and noise priors of the hierarchy.

    gamma / gamma_star are the lower/upper CRP concentrations; alpha_mu and
    alpha_nu are prior precisions of prototypes and components; (a_tau,
    b_tau) parametrize the inverse-gamma prior on category noise variance;
    xi_var is the variance of the jitter xi_c around an owned component
    (default 0.01/alpha_nu, a small perturbation at the prior's own scale).
    """

    gamma: float = 1.0
    gamma_star: float = 1.0
    alpha_mu: float = 1.0
    alpha_nu: float = 1.0
    a_tau: float = 1.0
    b_tau: float = 1.0
    xi_var: float | None = None

    def __post_init__(self):
        if self.xi_var is None:
            object.__setattr__(self, "xi_var", 0.01 / self.alpha_nu)
        for name in ("gamma", "gamma_star", "alpha_mu", "alpha_nu", "a_tau", "b_tau", "xi_var"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "gamma_star": self.gamma_star,
            "alpha_mu": self.alpha_mu,
            "alpha_nu": self.alpha_nu,
            "a_tau": self.a_tau,
            "b_tau": self.b_tau,
            "xi_var": self.xi_var,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Hyperparams":
        return cls(**doc)


@dataclass(frozen=True)
class MixtureModel:
    """Fitted or ground-truth hierarchy state.

    categories are rank-1 PpcaParams; counts are observations per category;
    ownership[c] indexes global_components, the shared directions nu_j.
    """

    d: int
    categories: tuple
    counts: tuple
    global_components: tuple
    ownership: tuple
    hyper: Hyperparams

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "counts", tuple(int(m) for m in self.counts))
        object.__setattr__(
            self, "global_components", tuple(np.asarray(nu, dtype=float) for nu in self.global_components)
        )
        object.__setattr__(self, "ownership", tuple(int(u) for u in self.ownership))
        if not (len(self.categories) == len(self.counts) == len(self.ownership)):
            raise ValueError("categories, counts and ownership must align")
        for cat in self.categories:
            if cat.d != self.d or cat.q != 1:
                raise ValueError("every category must be rank-1 in dimension d")
        for nu in self.global_components:
            if nu.shape != (self.d,):
                raise ValueError("components must be d-vectors")
        for u in self.ownership:
            if not 0 <= u < len(self.global_components):
                raise ValueError(f"ownership index {u} out of range")
        if any(m < 0 for m in self.counts):
            raise ValueError("counts must be nonnegative")

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def n_components(self) -> int:
        return len(self.global_components)

    def loadings(self) -> np.ndarray:
        """Category loading vectors stacked as rows (K, d)."""
        return np.array([cat.W[:, 0] for cat in self.categories])

    def mean_sigma2(self) -> float:
        return float(np.mean([cat.sigma2 for cat in self.categories]))


def _stacked(model: MixtureModel):
    mus = np.array([cat.mu for cat in model.categories])
    ws = model.loadings()
    s2s = np.array([cat.sigma2 for cat in model.categories])
    return mus, ws, s2s


# ---------------------------------------------------------------------------
# priors


def crp_assignment_probs(counts, gamma: float) -> np.ndarray:
    """Seating probabilities: existing category k with mass prop. to its
    count, a new category prop. to gamma. Returns length K+1."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    counts = np.asarray(counts, dtype=float)
    if counts.size and np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    raw = np.append(counts, gamma)
    return raw / raw.sum()


def crp_expected_clusters(n: int, gamma: float) -> float:
    """E[number of occupied categories] after n draws: sum_i gamma/(gamma+i-1)."""
    i = np.arange(n, dtype=float)
    return float(np.sum(gamma / (gamma + i)))


def simulate_crp(n: int, gamma: float, n_sequences: int, rng=0) -> np.ndarray:
    """Occupied-category counts for n_sequences independent CRP runs of
    length n. Uniform variates are drawn up front so the result does not
    depend on the compute backend."""
    gen = np.random.default_rng(rng)
    uniforms = gen.random((n_sequences, n))
    return simulate_crp_counts(uniforms, float(gamma))


def stick_breaking_weights(betas) -> tuple[np.ndarray, float]:
    """pi_k = beta_k * prod_{l<k}(1-beta_l); also returns the residual mass
    left after the truncation."""
    betas = np.asarray(betas, dtype=float)
    if np.any(betas <= 0) or np.any(betas >= 1):
        raise ValueError("each beta must lie strictly inside (0, 1)")
    remaining = np.cumprod(1.0 - betas)
    weights = betas * np.concatenate(([1.0], remaining[:-1]))
    return weights, float(remaining[-1])


def _truncated_stick(betas) -> np.ndarray:
    """Stick-breaking weights with the final stick absorbing the residual,
    so the truncated vector is a proper distribution."""
    weights, residual = stick_breaking_weights(betas)
    weights = weights.copy()
    weights[-1] += residual
    return weights


def _invgamma_draws(a: float, b: float, size, gen) -> np.ndarray:
    return 1.0 / gen.gamma(shape=a, scale=1.0 / b, size=size)


def _canonical_sign(w: np.ndarray) -> np.ndarray:
    """Flip w so its largest-magnitude entry is positive (w and -w define
    the same category covariance)."""
    if np.all(w == 0):
        return w
    idx = int(np.argmax(np.abs(w)))
    return -w if w[idx] < 0 else w


# ---------------------------------------------------------------------------
# generative process


def generate(hyper: Hyperparams, d: int, n: int, truncation: int = 20, rng=0):
    """Ancestral rollout of the full hierarchy, stick-breaking truncated.

    Returns (Dataset, MixtureModel, z) where the model holds the realized
    ground-truth structure (categories that received at least one
    observation, and the components they own) and z are the latent scores.
    """
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    gen = np.random.default_rng(rng)
    # components
    nus = gen.normal(scale=math.sqrt(1.0 / hyper.alpha_nu), size=(truncation, d))
    pi_star = _truncated_stick(gen.beta(1.0, hyper.gamma_star, size=truncation))
    # categories
    u = gen.choice(truncation, size=truncation, p=pi_star)
    xi = gen.normal(scale=math.sqrt(hyper.xi_var), size=(truncation, d))
    w_cat = nus[u] + xi
    mu_cat = gen.normal(scale=math.sqrt(1.0 / hyper.alpha_mu), size=(truncation, d))
    pi = _truncated_stick(gen.beta(1.0, hyper.gamma, size=truncation))
    sigma2_cat = _invgamma_draws(hyper.a_tau, hyper.b_tau, truncation, gen)
    # observations
    raw_labels = gen.choice(truncation, size=n, p=pi)
    z = gen.standard_normal(n)
    eps = gen.standard_normal((n, d)) * np.sqrt(sigma2_cat[raw_labels])[:, None]
    x = mu_cat[raw_labels] + w_cat[raw_labels] * z[:, None] + eps

    realized = np.unique(raw_labels)
    relabel = {int(old): new for new, old in enumerate(realized)}
    labels = np.array([relabel[int(c)] for c in raw_labels], dtype=np.int64)
    comp_ids = np.unique(u[realized])
    comp_map = {int(old): new for new, old in enumerate(comp_ids)}
    categories = [
        ppca.PpcaParams(mu=mu_cat[c], W=w_cat[c][:, None], sigma2=float(sigma2_cat[c]))
        for c in realized
    ]
    counts = [int(np.sum(raw_labels == c)) for c in realized]
    model = MixtureModel(
        d=d,
        categories=categories,
        counts=counts,
        global_components=[nus[j] for j in comp_ids],
        ownership=[comp_map[int(u[c])] for c in realized],
        hyper=hyper,
    )
    return Dataset(x=x, labels=labels), model, z


def generate_with_structure(
    hyper: Hyperparams,
    d: int,
    counts,
    ownership,
    rng=0,
    min_component_angle_deg: float = 25.0,
):
    """Ancestral sampling conditioned on a fixed structure: counts[c]
    observations per category, ownership[c] the owning component.

    Components are redrawn as a batch until every pair is separated by at
    least min_component_angle_deg (as lines, i.e. up to sign) so the
    structure is identifiable; all other draws follow the prior untouched.
    """
    counts = [int(m) for m in counts]
    ownership = [int(u) for u in ownership]
    if len(counts) != len(ownership) or not counts:
        raise ValueError("counts and ownership must align and be nonempty")
    if min(counts) < 1:
        raise ValueError("every category needs at least one observation")
    gen = np.random.default_rng(rng)
    n_comp = max(ownership) + 1
    cos_cap = math.cos(math.radians(min_component_angle_deg))
    while True:
        nus = gen.normal(scale=math.sqrt(1.0 / hyper.alpha_nu), size=(n_comp, d))
        if n_comp == 1:
            break
        unit = nus / np.linalg.norm(nus, axis=1, keepdims=True)
        cosines = np.abs(unit @ unit.T)
        np.fill_diagonal(cosines, 0.0)
        if cosines.max() < cos_cap:
            break
    xi = gen.normal(scale=math.sqrt(hyper.xi_var), size=(len(counts), d))
    w_cat = nus[ownership] + xi
    mu_cat = gen.normal(scale=math.sqrt(1.0 / hyper.alpha_mu), size=(len(counts), d))
    sigma2_cat = _invgamma_draws(hyper.a_tau, hyper.b_tau, len(counts), gen)

    labels = np.repeat(np.arange(len(counts)), counts)
    n = labels.size
    z = gen.standard_normal(n)
    eps = gen.standard_normal((n, d)) * np.sqrt(sigma2_cat[labels])[:, None]
    x = mu_cat[labels] + w_cat[labels] * z[:, None] + eps
    categories = [
        ppca.PpcaParams(mu=mu_cat[c], W=w_cat[c][:, None], sigma2=float(sigma2_cat[c]))
        for c in range(len(counts))
    ]
    model = MixtureModel(
        d=d,
        categories=categories,
        counts=counts,
        global_components=list(nus),
        ownership=ownership,
        hyper=hyper,
    )
    return Dataset(x=x, labels=labels), model, z


# ---------------------------------------------------------------------------
# top-level clustering of loading vectors


def cluster_loadings(ws: np.ndarray, hyper: Hyperparams, normalize: bool = False, max_sweeps: int = 50):
    """Cluster category loadings into shared components.

    Collapsed CRP mixture with conjugate Gaussian base measure: nu_j ~
    N(0, (1/alpha_nu) I) and w_c | u_c=j ~ N(nu_j, xi_var I). Iterated
    conditional modes on the ownership vector maximizes the collapsed joint
    log-posterior (CRP partition prior times per-cluster marginal
    likelihoods), so the objective never decreases. Deterministic.

    An estimated loading direction is only identified up to sign, so each
    move also picks the orientation (+w or -w) with the higher predictive —
    two noisy estimates of one shared direction then cluster together even
    when their raw signs disagree.

    Returns (ownership, components, objective_trace), components being the
    posterior-mean nu_j of each cluster. With normalize=True, clustering
    runs on unit-normalized loadings (directions only).
    """
    ws = np.atleast_2d(np.asarray(ws, dtype=float))
    n_cat, d = ws.shape
    ys = ws.copy()
    if normalize:
        norms = np.linalg.norm(ys, axis=1)
        nonzero = norms > 0
        ys[nonzero] = ys[nonzero] / norms[nonzero, None]
    s0sq = 1.0 / hyper.alpha_nu
    ssq = hyper.xi_var
    log_gs = math.log(hyper.gamma_star)

    def logz(m, vec_sum, sq_sum):
        kappa = 1.0 / s0sq + m / ssq
        return (
            -0.5 * m * d * (_LOG_2PI + math.log(ssq))
            - 0.5 * d * math.log(s0sq * kappa)
            + float(vec_sum @ vec_sum) / (2.0 * kappa * ssq * ssq)
            - sq_sum / (2.0 * ssq)
        )

    assign = np.full(n_cat, -1, dtype=int)
    orient = np.ones(n_cat)
    sizes: list[int] = []
    vec_sums: list[np.ndarray] = []
    sq_sums: list[float] = []

    def best_cluster(c: int) -> tuple[int, float]:
        y, ysq = ys[c], float(ys[c] @ ys[c])
        # a fresh cluster's marginal is sign-invariant (zero-mean base)
        best_j, best_s, best_gain = len(sizes), 1.0, log_gs + logz(1, y, ysq)
        for j in range(len(sizes)):
            base = math.log(sizes[j]) - logz(sizes[j], vec_sums[j], sq_sums[j])
            for s in (1.0, -1.0):
                gain = base + logz(sizes[j] + 1, vec_sums[j] + s * y, sq_sums[j] + ysq)
                if gain > best_gain:
                    best_j, best_s, best_gain = j, s, gain
        return best_j, best_s

    def add(c: int, j: int, s: float):
        if j == len(sizes):
            sizes.append(0)
            vec_sums.append(np.zeros(d))
            sq_sums.append(0.0)
        sizes[j] += 1
        vec_sums[j] = vec_sums[j] + s * ys[c]
        sq_sums[j] += float(ys[c] @ ys[c])
        assign[c] = j
        orient[c] = s

    def remove(c: int):
        j = assign[c]
        sizes[j] -= 1
        vec_sums[j] = vec_sums[j] - orient[c] * ys[c]
        sq_sums[j] -= float(ys[c] @ ys[c])
        assign[c] = -1
        if sizes[j] == 0:
            sizes.pop(j)
            vec_sums.pop(j)
            sq_sums.pop(j)
            assign[assign > j] -= 1

    def objective() -> float:
        total = len(sizes) * log_gs
        for j in range(len(sizes)):
            total += gammaln(sizes[j]) + logz(sizes[j], vec_sums[j], sq_sums[j])
        return float(total)

    for c in range(n_cat):
        add(c, *best_cluster(c))
    trace = [objective()]
    for _ in range(max_sweeps):
        changed = False
        for c in range(n_cat):
            old, old_s = assign[c], orient[c]
            remove(c)
            new, new_s = best_cluster(c)
            add(c, new, new_s)
            if new != old or new_s != old_s:
                changed = True
        trace.append(objective())
        # a sweep that improved nothing means every point is at its argmax
        # (index churn from singleton relabeling does not count as change)
        if not changed or trace[-1] - trace[-2] < 1e-10:
            break

    # relabel clusters by first appearance for a deterministic order
    order: list[int] = []
    for c in range(n_cat):
        if assign[c] not in order:
            order.append(assign[c])
    relabel = {old: new for new, old in enumerate(order)}
    ownership = [relabel[int(j)] for j in assign]
    components = []
    for old in order:
        kappa = 1.0 / s0sq + sizes[old] / ssq
        components.append((vec_sums[old] / ssq) / kappa)
    return ownership, components, trace


# ---------------------------------------------------------------------------
# fitting


def _fit_category(points: np.ndarray, hyper: Hyperparams) -> ppca.PpcaParams:
    """Rank-1 category fit with the noise variance regularized by its
    inverse-gamma prior (posterior mode). Singletons sit at the prior mode
    with a zero loading."""
    points = np.atleast_2d(points)
    m, d = points.shape
    prior_mode = hyper.b_tau / (hyper.a_tau + 1.0)
    if m == 1:
        return ppca.PpcaParams(mu=points[0], W=np.zeros((d, 1)), sigma2=prior_mode)
    mu = points.mean(axis=0)
    centered = points - mu
    S = centered.T @ centered / (m - 1)
    vals, vecs = np.linalg.eigh(S)
    vals, vecs = ppca._canonical_eig_order(vals, vecs)
    rss = (m - 1) * float(np.sum(vals[1:]))
    n_eff = (m - 1) * (d - 1)
    sigma2 = (hyper.b_tau + 0.5 * rss) / (hyper.a_tau + 0.5 * n_eff + 1.0)
    w = vecs[:, 0] * math.sqrt(max(float(vals[0]) - sigma2, 0.0))
    return ppca.PpcaParams(mu=mu, W=_canonical_sign(w)[:, None], sigma2=sigma2)


def fit_supervised(data: Dataset, hyper: Hyperparams, normalize_loadings: bool = False) -> MixtureModel:
    """Labeled fit: per-category rank-1 maximum likelihood, then the
    top-level clustering of the loading vectors (sign-canonicalized first;
    see cluster_loadings). Labels are relabeled to 0..K-1 in sorted order.
    """
    if data.labels is None:
        raise ValueError("fit_supervised needs labeled data")
    if data.d < 2:
        raise ValueError("rank-1 categories need d >= 2")
    label_values = np.unique(data.labels)
    categories = []
    counts = []
    for lab in label_values:
        points = data.x[data.labels == lab]
        if points.shape[0] < 2:
            raise ValueError(
                f"category {lab} has a single observation; one-shot categories "
                "are handled by fewshot.new_category_predictive, not by fitting"
            )
        params = ppca.fit_mle(points, q=1)
        w = _canonical_sign(params.W[:, 0])
        categories.append(ppca.PpcaParams(mu=params.mu, W=w[:, None], sigma2=params.sigma2))
        counts.append(points.shape[0])
    ws = np.array([cat.W[:, 0] for cat in categories])
    ownership, components, _ = cluster_loadings(ws, hyper, normalize=normalize_loadings)
    return MixtureModel(
        d=data.d,
        categories=categories,
        counts=counts,
        global_components=components,
        ownership=ownership,
        hyper=hyper,
    )


def _prior_predictive_logdensity(xs: np.ndarray, hyper: Hyperparams, d: int, n_draws: int, gen) -> np.ndarray:
    """Monte Carlo price of "a category never seen before": log mean over
    prior parameter draws of the rank-1 density at each row of xs."""
    mus = gen.normal(scale=math.sqrt(1.0 / hyper.alpha_mu), size=(n_draws, d))
    ws = gen.normal(scale=math.sqrt(1.0 / hyper.alpha_nu + hyper.xi_var), size=(n_draws, d))
    s2s = _invgamma_draws(hyper.a_tau, hyper.b_tau, n_draws, gen)
    dens = rank1_log_density(np.atleast_2d(xs), mus, ws, s2s)
    return logsumexp(dens, axis=1) - math.log(n_draws)


def _category_log_prior(theta: ppca.PpcaParams, hyper: Hyperparams) -> float:
    """Log prior density of one category's plug-in parameters."""
    d = theta.d
    w = theta.W[:, 0]
    var_w = 1.0 / hyper.alpha_nu + hyper.xi_var
    lp = -0.5 * (hyper.alpha_mu * float(theta.mu @ theta.mu) + d * math.log(2.0 * math.pi / hyper.alpha_mu))
    lp += -0.5 * (float(w @ w) / var_w + d * math.log(2.0 * math.pi * var_w))
    a, b = hyper.a_tau, hyper.b_tau
    lp += a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(theta.sigma2) - b / theta.sigma2
    return lp


def _plugin_category_score(points: np.ndarray, hyper: Hyperparams) -> float:
    """MAP-fit log likelihood of a candidate category plus its parameter
    prior; the merge phase compares partitions by summing these with the
    partition prior."""
    theta = _fit_category(points, hyper)
    ll = float(
        np.sum(rank1_log_density(points, theta.mu[None, :], theta.W[:, 0][None, :], np.array([theta.sigma2])))
    )
    return ll + _category_log_prior(theta, hyper)


def _merge_pass(x: np.ndarray, members: list, params: list, hyper: Hyperparams) -> bool:
    """Greedily merge category pairs while the joint score improves.

    The score of a partition is sum over categories of
    lgamma(count) + plug-in evidence, plus log gamma per category (the
    partition prior); a merge wins when the pooled fit plus the larger
    occupancy factor beats keeping the pair separate. Counters the
    fragmentation that pointwise reassignment cannot undo (moving one
    point at a time out of a split cluster never looks locally better).
    """
    scores = [_plugin_category_score(x[m], hyper) for m in members]
    changed = False
    while len(members) > 1:
        best_delta, best_pair = 1e-9, None
        for j in range(len(members)):
            for k in range(j + 1, len(members)):
                union = members[j] + members[k]
                s_union = _plugin_category_score(x[union], hyper)
                delta = (
                    math.lgamma(len(union))
                    + s_union
                    - math.lgamma(len(members[j]))
                    - scores[j]
                    - math.lgamma(len(members[k]))
                    - scores[k]
                    - math.log(hyper.gamma)
                )
                if delta > best_delta:
                    best_delta, best_pair = delta, (j, k, s_union)
        if best_pair is None:
            break
        j, k, s_union = best_pair
        members[j] = members[j] + members[k]
        del members[k]
        params[j] = _fit_category(x[members[j]], hyper)
        del params[k]
        scores[j] = s_union
        del scores[k]
        changed = True
    return changed


def fit_unsupervised(
    data: Dataset,
    hyper: Hyperparams,
    epochs: int = 10,
    rng=0,
    n_new_draws: int = 64,
    normalize_loadings: bool = False,
) -> MixtureModel:
    """Unlabeled fit by seeded iterated conditional modes.

    Greedy sequential initialization assigns each observation to the
    best-scoring existing category (density times CRP mass) or to a fresh
    one priced by a Monte Carlo prior predictive (n_new_draws parameter
    draws, shared across the whole fit). Then up to `epochs` rounds, each
    a merge phase (see _merge_pass) followed by a batch reassignment
    sweep, refitting after each sweep. Stochastic only through the seeded
    prior draws: a repeated run with the same rng gives identical
    assignments.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if data.n < 2:
        raise ValueError("need at least 2 observations")
    if data.d < 2:
        raise ValueError("rank-1 categories need d >= 2")
    x = data.x
    n, d = x.shape
    gen = np.random.default_rng(rng)
    log_new = _prior_predictive_logdensity(x, hyper, d, n_new_draws, gen) + math.log(hyper.gamma)

    if np.allclose(x, x[0], atol=1e-12):
        # no structure at all: one category at the shared point, noise at the
        # prior mode
        model_cat = _fit_category(x[:1], hyper)
        ownership, components, _ = cluster_loadings(
            model_cat.W[:, 0][None, :], hyper, normalize=normalize_loadings
        )
        return MixtureModel(
            d=d,
            categories=[model_cat],
            counts=[n],
            global_components=components,
            ownership=ownership,
            hyper=hyper,
        )

    # greedy sequential initialization
    assign = np.full(n, -1, dtype=int)
    members: list[list[int]] = []
    params: list[ppca.PpcaParams] = []
    for i in range(n):
        best_j, best_score = len(members), log_new[i]
        for j, theta in enumerate(params):
            score = ppca.marginal_log_density(x[i], theta) + math.log(len(members[j]))
            if score > best_score:
                best_j, best_score = j, score
        if best_j == len(members):
            members.append([i])
        else:
            members[best_j].append(i)
        assign[i] = best_j
        affected = members[best_j]
        if best_j == len(params):
            params.append(_fit_category(x[affected], hyper))
        else:
            params[best_j] = _fit_category(x[affected], hyper)

    # alternating merge phases and batch sweeps
    for _ in range(epochs):
        merged = _merge_pass(x, members, params, hyper)
        if merged:
            for j, m in enumerate(members):
                for i in m:
                    assign[i] = j
        mus = np.array([t.mu for t in params])
        ws = np.array([t.W[:, 0] for t in params])
        s2s = np.array([t.sigma2 for t in params])
        counts = np.array([len(m) for m in members], dtype=float)
        scores = rank1_log_density(x, mus, ws, s2s) + np.log(counts)[None, :]
        scores = np.concatenate([scores, log_new[:, None]], axis=1)
        new_assign = np.argmax(scores, axis=1)
        if not merged and np.array_equal(new_assign, assign):
            break
        # relabel surviving clusters in first-appearance order
        kept: list[int] = []
        for label in new_assign:
            if label not in kept:
                kept.append(int(label))
        relabel = {old: j for j, old in enumerate(kept)}
        assign = np.array([relabel[int(a)] for a in new_assign])
        members = [list(np.nonzero(assign == j)[0]) for j in range(len(kept))]
        params = [_fit_category(x[m], hyper) for m in members]

    counts = [len(m) for m in members]
    categories = [
        ppca.PpcaParams(mu=t.mu, W=_canonical_sign(t.W[:, 0])[:, None], sigma2=t.sigma2)
        for t in params
    ]
    ws = np.array([cat.W[:, 0] for cat in categories])
    ownership, components, _ = cluster_loadings(ws, hyper, normalize=normalize_loadings)
    return MixtureModel(
        d=d,
        categories=categories,
        counts=counts,
        global_components=components,
        ownership=ownership,
        hyper=hyper,
    )


# ---------------------------------------------------------------------------
# prediction


def predict_category(
    x: np.ndarray,
    model: MixtureModel,
    include_base_rate: bool = True,
    n_new_draws: int = 64,
    rng=0,
) -> Prediction:
    """Posterior over categories for one observation.

    Existing categories are weighted by their counts when
    include_base_rate is on, uniformly otherwise; a "new category" bucket
    (weight gamma, or uniform with the flag off) is priced by the Monte
    Carlo prior predictive. n_new_draws=0 removes the bucket.
    """
    if model.n_categories == 0:
        raise ValueError("empty model")
    x = np.asarray(x, dtype=float)
    if x.shape != (model.d,):
        raise ValueError(f"x must have shape ({model.d},)")
    mus, ws, s2s = _stacked(model)
    loglik = rank1_log_density(x[None, :], mus, ws, s2s)[0]
    if include_base_rate:
        log_prior = np.log(np.asarray(model.counts, dtype=float))
        log_new_prior = math.log(model.hyper.gamma)
    else:
        log_prior = np.zeros(model.n_categories)
        log_new_prior = 0.0
    scores = loglik + log_prior
    if n_new_draws > 0:
        gen = np.random.default_rng(rng)
        log_new = _prior_predictive_logdensity(x[None, :], model.hyper, model.d, n_new_draws, gen)[0]
        return Prediction.from_log_scores(scores, log_new + log_new_prior)
    return Prediction.from_log_scores(scores)


def map_assignments(model: MixtureModel, xs: np.ndarray, include_base_rate: bool = True) -> np.ndarray:
    """Most probable existing category per row of xs (no new-category bucket)."""
    if model.n_categories == 0:
        raise ValueError("empty model")
    mus, ws, s2s = _stacked(model)
    scores = rank1_log_density(np.atleast_2d(xs), mus, ws, s2s)
    if include_base_rate:
        scores = scores + np.log(np.asarray(model.counts, dtype=float))[None, :]
    return np.argmax(scores, axis=1)


def generalization_grid(
    model: MixtureModel,
    anchor: np.ndarray,
    grid,
    n_new_draws: int = 64,
    rng=0,
    share_loadings: bool = True,
) -> np.ndarray:
    """Probability, for each grid point, of sharing the anchor's category.

    The anchor forms a one-observation category whose predictive inherits
    the model's shared components (fewshot.new_category_predictive); the
    alternatives are every existing category plus a prior-priced "new"
    bucket. Weights are uniform across all buckets (base rates removed).
    With share_loadings=False the anchor category inherits nothing and its
    predictive is isotropic with the component prior's marginal variance.
    """
    from . import fewshot  # runtime import; fewshot type-checks against this module

    anchor = np.asarray(anchor, dtype=float)
    points = np.atleast_2d(np.asarray(grid, dtype=float))
    if share_loadings:
        mixture = fewshot.new_category_predictive(anchor, model)
        log_anchor = mixture.log_density(points)
    else:
        var = model.mean_sigma2() + 1.0 / model.hyper.alpha_nu + model.hyper.xi_var
        sq = np.einsum("nd,nd->n", points - anchor, points - anchor)
        log_anchor = -0.5 * (model.d * (_LOG_2PI + math.log(var)) + sq / var)
    mus, ws, s2s = _stacked(model)
    log_cats = rank1_log_density(points, mus, ws, s2s)
    buckets = [log_anchor[:, None], log_cats]
    if n_new_draws > 0:
        gen = np.random.default_rng(rng)
        log_new = _prior_predictive_logdensity(points, model.hyper, model.d, n_new_draws, gen)
        buckets.append(log_new[:, None])
    stacked = np.concatenate(buckets, axis=1)
    return np.exp(log_anchor - logsumexp(stacked, axis=1))


# ---------------------------------------------------------------------------
# serialization


def model_to_json(model: MixtureModel) -> str:
    """JSON document with decimal floats; lossless round-trip."""
    doc = {
        "d": model.d,
        "categories": [
            {
                "mu": cat.mu.tolist(),
                "w": cat.W[:, 0].tolist(),
                "sigma2": cat.sigma2,
                "count": count,
            }
            for cat, count in zip(model.categories, model.counts)
        ],
        "components": [nu.tolist() for nu in model.global_components],
        "ownership": list(model.ownership),
        "hyper": model.hyper.to_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def model_from_json(text: str) -> MixtureModel:
    doc = json.loads(text)
    categories = [
        ppca.PpcaParams(
            mu=np.asarray(c["mu"], dtype=float),
            W=np.asarray(c["w"], dtype=float)[:, None],
            sigma2=float(c["sigma2"]),
        )
        for c in doc["categories"]
    ]
    return MixtureModel(
        d=int(doc["d"]),
        categories=categories,
        counts=[int(c["count"]) for c in doc["categories"]],
        global_components=[np.asarray(nu, dtype=float) for nu in doc["components"]],
        ownership=[int(u) for u in doc["ownership"]],
        hyper=Hyperparams.from_dict(doc["hyper"]),
    )
