"""Reference categorization models: exemplar, prototype, attention variants,
a linear-rule fit, and the model-comparison metrics.

Similarity conventions (the sources cite these models without writing the
functional forms): exemplar similarity is exp(-sensitivity * distance) with
the plain attention-weighted Euclidean distance; the prototype model uses
the squared distance. Attention weights rescale dimensions inversely to
pooled within-category variance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .datatypes import Dataset, Prediction

SENSITIVITY_GRID = np.logspace(-5.0, 5.0, 64, base=2.0)

ATTENTION_CAP_RATIO = 1e3  # cap on inverse-variance weights vs their median

CONVENTIONS = {
    "exemplar_similarity": "exp(-sensitivity * attention-weighted Euclidean distance)",
    "prototype_similarity": "exp(-sensitivity * squared attention-weighted Euclidean distance)",
    "attention": "inverse pooled within-category variance, capped at 1e3 x median, normalized to sum d",
    "sensitivity_fit": "1-D grid search on 64 log-spaced points in [2^-5, 2^5] maximizing training label log-likelihood (leave-one-out for the exemplar model)",
    "expected_accuracy": "mean over stimuli of sum_c p_model(c) * p_reference(c)",
}


def _check_attention(attention, d: int) -> np.ndarray | None:
    if attention is None:
        return None
    attention = np.asarray(attention, dtype=float)
    if attention.shape != (d,) or np.any(attention < 0):
        raise ValueError("attention must be d nonnegative weights")
    return attention


@dataclass(frozen=True)
class ExemplarStore:
    """All training items per category, with similarity-gradient sensitivity
    and optional attention weights. squared=True switches to squared
    distance (then a one-exemplar-per-category store is exactly the
    prototype model)."""

    exemplars: tuple
    sensitivity: float = 1.0
    attention: np.ndarray | None = None
    squared: bool = False

    def __post_init__(self):
        exemplars = tuple(np.atleast_2d(np.asarray(e, dtype=float)) for e in self.exemplars)
        object.__setattr__(self, "exemplars", exemplars)
        if not exemplars or any(e.shape[0] == 0 for e in exemplars):
            raise ValueError("need at least one exemplar per category")
        d = exemplars[0].shape[1]
        if any(e.shape[1] != d for e in exemplars):
            raise ValueError("exemplar dimensions disagree")
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be positive")
        object.__setattr__(self, "attention", _check_attention(self.attention, d))

    @property
    def d(self) -> int:
        return self.exemplars[0].shape[1]

    @property
    def n_categories(self) -> int:
        return len(self.exemplars)


@dataclass(frozen=True)
class PrototypeStore:
    """One mean vector per category plus sensitivity/attention."""

    prototypes: np.ndarray
    sensitivity: float = 1.0
    attention: np.ndarray | None = None

    def __post_init__(self):
        protos = np.atleast_2d(np.asarray(self.prototypes, dtype=float))
        object.__setattr__(self, "prototypes", protos)
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be positive")
        object.__setattr__(self, "attention", _check_attention(self.attention, protos.shape[1]))

    @property
    def d(self) -> int:
        return self.prototypes.shape[1]

    @property
    def n_categories(self) -> int:
        return self.prototypes.shape[0]


def _weighted_dists(x: np.ndarray, points: np.ndarray, attention) -> np.ndarray:
    delta = points - x
    if attention is not None:
        return np.sqrt(np.einsum("nd,d,nd->n", delta, attention, delta))
    return np.sqrt(np.einsum("nd,nd->n", delta, delta))


def exemplar_predict(x: np.ndarray, store: ExemplarStore) -> Prediction:
    """P(c|x) proportional to summed similarity over the category's stored
    exemplars (log-space accumulation, safe for distant probes)."""
    x = np.asarray(x, dtype=float)
    log_scores = np.empty(store.n_categories)
    for c, members in enumerate(store.exemplars):
        dists = _weighted_dists(x, members, store.attention)
        if store.squared:
            dists = dists**2
        log_scores[c] = logsumexp(-store.sensitivity * dists)
    return Prediction.from_log_scores(log_scores)


def prototype_predict(x: np.ndarray, store: PrototypeStore) -> Prediction:
    """P(c|x) proportional to exp(-sensitivity * squared distance to the
    category prototype)."""
    x = np.asarray(x, dtype=float)
    dists = _weighted_dists(x, store.prototypes, store.attention)
    return Prediction.from_log_scores(-store.sensitivity * dists**2)


def fit_attention(data: Dataset) -> np.ndarray:
    """Per-dimension weights inversely proportional to pooled
    within-category variance, normalized to sum d. Zero-variance dimensions
    are capped at 1e3 x the median weight instead of blowing up."""
    if data.labels is None:
        raise ValueError("attention fitting needs labeled data")
    label_values = np.unique(data.labels)
    if label_values.size < 2:
        raise ValueError("need at least 2 categories")
    d = data.d
    ss = np.zeros(d)
    for lab in label_values:
        points = data.x[data.labels == lab]
        ss += np.sum((points - points.mean(axis=0)) ** 2, axis=0)
    pooled_var = ss / (data.n - label_values.size)
    with np.errstate(divide="ignore"):
        inv = np.where(pooled_var > 0, 1.0 / pooled_var, np.inf)
    finite = inv[np.isfinite(inv)]
    if finite.size == 0:
        return np.full(d, 1.0)
    cap = ATTENTION_CAP_RATIO * float(np.median(finite))
    inv = np.minimum(inv, cap)
    return inv * (d / inv.sum())


def fit_exemplar(data: Dataset, use_attention: bool = False, sensitivity: float | None = None) -> ExemplarStore:
    """Store every training item; pick sensitivity by leave-one-out label
    log-likelihood over SENSITIVITY_GRID (the held-in item would otherwise
    dominate and push sensitivity to infinity)."""
    if data.labels is None:
        raise ValueError("exemplar fitting needs labeled data")
    label_values = np.unique(data.labels)
    exemplars = tuple(data.x[data.labels == lab] for lab in label_values)
    attention = fit_attention(data) if use_attention else None
    if sensitivity is not None:
        return ExemplarStore(exemplars=exemplars, sensitivity=sensitivity, attention=attention)

    label_index = {int(lab): c for c, lab in enumerate(label_values)}
    member_lists = [np.nonzero(data.labels == lab)[0] for lab in label_values]
    all_dists = np.zeros((data.n, data.n))
    for i in range(data.n):
        all_dists[i] = _weighted_dists(data.x[i], data.x, attention)
    best_s, best_ll = None, -np.inf
    for s in SENSITIVITY_GRID:
        ll = 0.0
        for i in range(data.n):
            log_scores = np.empty(label_values.size)
            for c, members in enumerate(member_lists):
                others = members[members != i]
                if others.size == 0:
                    log_scores[c] = -np.inf
                    continue
                log_scores[c] = logsumexp(-s * all_dists[i, others])
            norm = logsumexp(log_scores)
            target = log_scores[label_index[int(data.labels[i])]]
            ll += float(target - norm) if np.isfinite(norm) else -700.0
        if ll > best_ll:
            best_s, best_ll = float(s), ll
    return ExemplarStore(exemplars=exemplars, sensitivity=best_s, attention=attention)


def fit_prototype(data: Dataset, use_attention: bool = False, sensitivity: float | None = None) -> PrototypeStore:
    """Category means; sensitivity by training label log-likelihood over the
    same grid."""
    if data.labels is None:
        raise ValueError("prototype fitting needs labeled data")
    label_values = np.unique(data.labels)
    protos = np.array([data.x[data.labels == lab].mean(axis=0) for lab in label_values])
    attention = fit_attention(data) if use_attention else None
    store = PrototypeStore(prototypes=protos, sensitivity=1.0, attention=attention)
    if sensitivity is not None:
        return replace(store, sensitivity=sensitivity)
    label_index = {int(lab): c for c, lab in enumerate(label_values)}
    best_s, best_ll = None, -np.inf
    for s in SENSITIVITY_GRID:
        candidate = replace(store, sensitivity=float(s))
        ll = 0.0
        for i in range(data.n):
            pred = prototype_predict(data.x[i], candidate)
            ll += float(np.log(max(pred.categories[label_index[int(data.labels[i])]], 1e-300)))
        if ll > best_ll:
            best_s, best_ll = float(s), ll
    return replace(store, sensitivity=best_s)


# ---------------------------------------------------------------------------
# linear rule


def fit_linear_rule(xs: np.ndarray, ref_probs: np.ndarray, epochs: int = 2000, lr: float = 0.5):
    """Softmax regression of reference choice probabilities on raw stimulus
    coordinates (full-batch gradient descent; deterministic zero init).
    Returns (weights (d, C), bias (C,))."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ref_probs = np.atleast_2d(np.asarray(ref_probs, dtype=float))
    n, d = xs.shape
    n_cat = ref_probs.shape[1]
    if ref_probs.shape[0] != n:
        raise ValueError("stimulus/reference length mismatch")
    weights = np.zeros((d, n_cat))
    bias = np.zeros(n_cat)
    for _ in range(epochs):
        logits = xs @ weights + bias
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        g = (probs - ref_probs) / n
        weights -= lr * xs.T @ g
        bias -= lr * g.sum(axis=0)
    return weights, bias


def linear_rule_predict(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> Prediction:
    return Prediction.from_log_scores(np.asarray(x, dtype=float) @ weights + bias)


# ---------------------------------------------------------------------------
# comparison metrics


def _prediction_matrix(preds, n_ref_cols: int) -> np.ndarray:
    rows = np.array([p.full_vector() for p in preds])
    if rows.shape[1] == n_ref_cols + 1 and np.allclose(rows[:, -1], 0.0, atol=1e-12):
        return rows[:, :-1]
    if rows.shape[1] == n_ref_cols:
        return rows
    raise ValueError(
        f"prediction length {rows.shape[1]} does not match reference width {n_ref_cols}"
    )


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / denom) if denom > 0 else float("nan")


def compare_models(predictions: dict, reference: np.ndarray, n_boot: int = 1000, rng=0) -> dict:
    """Score per-model prediction lists against reference probability rows.

    expected accuracy: mean over stimuli of the model/reference probability
    dot product. correlation: Pearson over all (stimulus, category) pairs.
    Standard errors by bootstrap over stimuli (n_boot resamples).
    """
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    n, n_cols = reference.shape
    matrices = {}
    for name, preds in predictions.items():
        if len(preds) != n:
            raise ValueError(f"model {name!r}: {len(preds)} predictions for {n} stimuli")
        matrices[name] = _prediction_matrix(list(preds), n_cols)
    gen = np.random.default_rng(rng)
    boot_idx = gen.integers(0, n, size=(n_boot, n))
    table = {}
    for name, mat in matrices.items():
        dots = np.sum(mat * reference, axis=1)
        acc = float(np.mean(dots))
        corr = _pearson(mat.ravel(), reference.ravel())
        boot_acc = np.empty(n_boot)
        boot_corr = np.empty(n_boot)
        for b in range(n_boot):
            idx = boot_idx[b]
            boot_acc[b] = float(np.mean(dots[idx]))
            boot_corr[b] = _pearson(mat[idx].ravel(), reference[idx].ravel())
        finite_corr = boot_corr[np.isfinite(boot_corr)]
        table[name] = {
            "expected_accuracy": acc,
            "expected_accuracy_se": float(np.std(boot_acc, ddof=1)),
            "correlation": corr,
            "correlation_se": float(np.std(finite_corr, ddof=1))
            if finite_corr.size > 1
            else float("nan"),
        }
    return table
