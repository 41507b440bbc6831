"""Multi-head rank-1 PPCA classifier over precomputed embeddings.

Each category head scores an embedding with the Gaussian log-density of a
rank-1-plus-isotropic covariance; softmax over heads gives class
probabilities trained against soft labels with a cross-entropy loss and a
pairwise inner-product penalty on the head parameter vectors. Everything is
plain numpy with analytic gradients; embeddings arrive from CSV files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import rank1_log_density

_LOG_2PI = float(np.log(2.0 * np.pi))


class TrainingDivergenceError(RuntimeError):
    """Raised when the loss becomes non-finite; carries the trace so far."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class HeadParams:
    """Per-category location mu, loading w and log-variance, stacked: mus
    and ws are (C, d_emb), log_sigma2s is (C,). sigma2 = exp(log_sigma2)
    stays positive with unconstrained optimization."""

    mus: np.ndarray
    ws: np.ndarray
    log_sigma2s: np.ndarray

    def __post_init__(self):
        mus = np.atleast_2d(np.asarray(self.mus, dtype=float))
        ws = np.atleast_2d(np.asarray(self.ws, dtype=float))
        ls2 = np.atleast_1d(np.asarray(self.log_sigma2s, dtype=float))
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "ws", ws)
        object.__setattr__(self, "log_sigma2s", ls2)
        if mus.shape != ws.shape or ls2.shape != (mus.shape[0],):
            raise ValueError("head parameter shapes disagree")
        if not (np.all(np.isfinite(mus)) and np.all(np.isfinite(ws)) and np.all(np.isfinite(ls2))):
            raise ValueError("head parameters must be finite")

    @property
    def n_heads(self) -> int:
        return self.mus.shape[0]

    @property
    def d_emb(self) -> int:
        return self.mus.shape[1]

    def sigma2s(self) -> np.ndarray:
        return np.exp(self.log_sigma2s)


@dataclass(frozen=True)
class HeadGrads:
    """Gradient container mirroring HeadParams."""

    mus: np.ndarray
    ws: np.ndarray
    log_sigma2s: np.ndarray


@dataclass(frozen=True)
class SoftLabelBatch:
    """Embeddings (B, d_emb) with row-stochastic soft targets (B, C)."""

    embeddings: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        emb = np.atleast_2d(np.asarray(self.embeddings, dtype=float))
        tgt = np.atleast_2d(np.asarray(self.targets, dtype=float))
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "targets", tgt)
        if emb.shape[0] != tgt.shape[0]:
            raise ValueError("embeddings and targets must have the same number of rows")
        if np.any(tgt < 0):
            raise ValueError("target probabilities must be nonnegative")
        sums = tgt.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > 1e-6)[0]
        if bad.size:
            raise ValueError(f"target rows must sum to 1; offending rows: {bad.tolist()}")

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]


def head_log_likelihoods(embeddings: np.ndarray, heads: HeadParams, proportional: bool = False) -> np.ndarray:
    """Log-density of every embedding under every head, (B, C).

    Default is the fully normalized Gaussian (the per-head terms
    -(1/2)log(w'w+sigma2) and -((d-1)/2)log sigma2 vary across heads, so
    they matter for classification). proportional=True reproduces the
    unnormalized shortcut -log(w'w+sigma2) - quad/2 instead, for
    comparison.
    """
    x = np.atleast_2d(np.asarray(embeddings, dtype=float))
    if x.shape[1] != heads.d_emb:
        raise ValueError(f"embeddings have dimension {x.shape[1]}, heads expect {heads.d_emb}")
    s2 = heads.sigma2s()
    if not proportional:
        return rank1_log_density(x, heads.mus, heads.ws, s2)
    m = np.sum(heads.ws * heads.ws, axis=1) + s2
    delta = x[:, None, :] - heads.mus[None, :, :]
    t = np.einsum("bjd,jd->bj", delta, heads.ws)
    quad = (np.einsum("bjd,bjd->bj", delta, delta) - t * t / m[None, :]) / s2[None, :]
    return -np.log(m)[None, :] - 0.5 * quad


def _check_lambdas(lambda1: float, lambda2: float, n_heads: int):
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("penalty coefficients must be nonnegative")
    if lambda2 > 0 and not lambda1 > (n_heads - 1) * lambda2:
        raise ValueError(
            "penalty positive-definiteness requires lambda1 > (C-1)*lambda2; "
            f"got lambda1={lambda1}, lambda2={lambda2}, C={n_heads}"
        )


def default_lambda1(n_heads: int, lambda2: float) -> float:
    """The conventional coupling lambda1 = C * lambda2 (satisfies the
    positive-definiteness constraint with one head's worth of margin)."""
    return n_heads * lambda2


def _thetas(heads: HeadParams) -> np.ndarray:
    return np.concatenate([heads.mus, heads.ws], axis=1)


def _penalty(heads: HeadParams, lambda1: float, lambda2: float) -> float:
    thetas = _thetas(heads)
    self_sq = float(np.sum(thetas * thetas))
    total = thetas.sum(axis=0)
    cross = float(total @ total) - self_sq
    return lambda1 * self_sq - lambda2 * cross


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    return probs / probs.sum(axis=1, keepdims=True)


def regularized_loss(batch: SoftLabelBatch, heads: HeadParams, lambda1: float, lambda2: float) -> float:
    """Mean cross-entropy between soft targets and softmaxed head densities,
    plus lambda1 * sum_j ||theta_j||^2 - lambda2 * sum_{j!=k} theta_j.theta_k
    with theta_j the concatenated (mu_j, w_j)."""
    _check_lambdas(lambda1, lambda2, heads.n_heads)
    ll = head_log_likelihoods(batch.embeddings, heads)
    log_probs = ll - ll.max(axis=1, keepdims=True)
    log_probs = log_probs - np.log(np.sum(np.exp(log_probs), axis=1, keepdims=True))
    cross_entropy = -float(np.mean(np.sum(batch.targets * log_probs, axis=1)))
    return cross_entropy + _penalty(heads, lambda1, lambda2)


def loss_gradient(batch: SoftLabelBatch, heads: HeadParams, lambda1: float, lambda2: float) -> HeadGrads:
    """Analytic gradient of regularized_loss for every head parameter."""
    _check_lambdas(lambda1, lambda2, heads.n_heads)
    x = batch.embeddings
    n, d = x.shape
    s2 = heads.sigma2s()
    m = np.sum(heads.ws * heads.ws, axis=1) + s2  # (C,)
    delta = x[:, None, :] - heads.mus[None, :, :]  # (B, C, d)
    t = np.einsum("bjd,jd->bj", delta, heads.ws)
    dist_sq = np.einsum("bjd,bjd->bj", delta, delta)
    quad = dist_sq - t * t / m[None, :]
    ll = -0.5 * (d * _LOG_2PI + np.log(m)[None, :] + (d - 1) * np.log(s2)[None, :] + quad / s2[None, :])
    g = (_softmax(ll) - batch.targets) / n  # (B, C): dL/d(ll)

    g_sum = g.sum(axis=0)  # (C,)
    gt_sum = np.einsum("bj,bj->j", g, t)
    gtt_sum = np.einsum("bj,bj,bj->j", g, t, t)
    g_delta = np.einsum("bj,bjd->jd", g, delta)
    gt_delta = np.einsum("bj,bj,bjd->jd", g, t, delta)

    grad_mu = (g_delta - gt_sum[:, None] * heads.ws / m[:, None]) / s2[:, None]
    grad_w = (
        -g_sum[:, None] * heads.ws / m[:, None]
        + gt_delta / (s2 * m)[:, None]
        - gtt_sum[:, None] * heads.ws / (s2 * m * m)[:, None]
    )
    gq_sum = np.einsum("bj,bj->j", g, quad)
    grad_s2 = (
        -0.5 * g_sum / m
        - 0.5 * (d - 1) * g_sum / s2
        + 0.5 * gq_sum / (s2 * s2)
        - 0.5 * gtt_sum / (s2 * m * m)
    )
    grad_ls2 = grad_s2 * s2

    thetas = _thetas(heads)
    total = thetas.sum(axis=0)
    pen = 2.0 * lambda1 * thetas - 2.0 * lambda2 * (total[None, :] - thetas)
    grad_mu = grad_mu + pen[:, :d]
    grad_w = grad_w + pen[:, d:]
    return HeadGrads(mus=grad_mu, ws=grad_w, log_sigma2s=grad_ls2)


def init_heads(d_emb: int, n_heads: int, rng=0, scale: float = 0.1) -> HeadParams:
    gen = np.random.default_rng(rng)
    return HeadParams(
        mus=gen.normal(scale=scale, size=(n_heads, d_emb)),
        ws=gen.normal(scale=scale, size=(n_heads, d_emb)),
        log_sigma2s=np.zeros(n_heads),
    )


def init_heads_for(data: SoftLabelBatch, rng=0, scale: float = 0.1) -> HeadParams:
    """Data-scaled initialization: means jittered around the embedding
    centroid, noise floor at the per-coordinate variance. Keeps the early
    log-variance gradients near zero, which a unit-scale init does not when
    the embeddings live on a much larger scale.
    """
    gen = np.random.default_rng(rng)
    n_heads = data.targets.shape[1]
    center = data.embeddings.mean(axis=0)
    coord_var = float(np.mean(np.var(data.embeddings, axis=0)))
    spread = math.sqrt(coord_var) if coord_var > 0 else 1.0
    return HeadParams(
        mus=center[None, :] + gen.normal(scale=scale * spread, size=(n_heads, center.size)),
        ws=gen.normal(scale=scale * spread, size=(n_heads, center.size)),
        log_sigma2s=np.full(n_heads, math.log(max(coord_var, 1e-12))),
    )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    lambda1: float = 0.0
    lambda2: float = 0.0
    validation_fraction: float = 0.0
    seed: int = 0


def train(data: SoftLabelBatch, heads: HeadParams, config: TrainConfig):
    """Seeded minibatch gradient descent with momentum.

    Returns (HeadParams, trace) where trace is a list of per-epoch dicts
    with the full-data regularized loss (and validation loss when a split
    is configured). A non-finite loss aborts with the partial trace.
    """
    _check_lambdas(config.lambda1, config.lambda2, heads.n_heads)
    gen = np.random.default_rng(config.seed)
    n = data.n
    if config.validation_fraction > 0:
        n_val = max(1, int(round(config.validation_fraction * n)))
        perm = gen.permutation(n)
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        if train_idx.size == 0:
            raise ValueError("validation split leaves no training rows")
        train_split = SoftLabelBatch(data.embeddings[train_idx], data.targets[train_idx])
        val_split = SoftLabelBatch(data.embeddings[val_idx], data.targets[val_idx])
    else:
        train_split, val_split = data, None

    mus = heads.mus.copy()
    ws = heads.ws.copy()
    ls2 = heads.log_sigma2s.copy()
    v_mu = np.zeros_like(mus)
    v_w = np.zeros_like(ws)
    v_ls2 = np.zeros_like(ls2)
    trace: list[dict] = []
    n_train = train_split.n
    for epoch in range(config.epochs):
        order = gen.permutation(n_train)
        # overflow inside a diverging step is caught by the finiteness
        # checks below, not by numpy warnings
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for start in range(0, n_train, config.batch_size):
                idx = order[start : start + config.batch_size]
                batch = SoftLabelBatch(train_split.embeddings[idx], train_split.targets[idx])
                current = HeadParams(mus=mus, ws=ws, log_sigma2s=ls2)
                grads = loss_gradient(batch, current, config.lambda1, config.lambda2)
                v_mu = config.momentum * v_mu - config.learning_rate * grads.mus
                v_w = config.momentum * v_w - config.learning_rate * grads.ws
                v_ls2 = config.momentum * v_ls2 - config.learning_rate * grads.log_sigma2s
                mus = mus + v_mu
                ws = ws + v_w
                ls2 = ls2 + v_ls2
                if not (
                    np.all(np.isfinite(mus)) and np.all(np.isfinite(ws)) and np.all(np.isfinite(ls2))
                ):
                    raise TrainingDivergenceError(
                        f"non-finite parameters at epoch {epoch}", trace
                    )
            current = HeadParams(mus=mus, ws=ws, log_sigma2s=ls2)
            entry = {"epoch": epoch, "train_loss": regularized_loss(train_split, current, config.lambda1, config.lambda2)}
            if val_split is not None:
                entry["val_loss"] = regularized_loss(val_split, current, config.lambda1, config.lambda2)
        trace.append(entry)
        if not all(np.isfinite(v) for k, v in entry.items() if k != "epoch"):
            raise TrainingDivergenceError(f"non-finite loss at epoch {epoch}", trace)
    return HeadParams(mus=mus, ws=ws, log_sigma2s=ls2), trace


def predict_probs(embeddings: np.ndarray, heads: HeadParams) -> np.ndarray:
    """Softmax over head log-densities, (B, C)."""
    return _softmax(head_log_likelihoods(embeddings, heads))


def spectrum_report(covariances) -> np.ndarray:
    """Descending eigenvalue fractions of each category covariance, (K, d)."""
    out = []
    for k, cov in enumerate(covariances):
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError(f"covariance {k} is not square")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError(f"covariance {k} is not symmetric")
        vals = np.linalg.eigvalsh(cov)[::-1]
        out.append(vals / vals.sum())
    return np.array(out)


# ---------------------------------------------------------------------------
# file formats


def read_embeddings_csv(path) -> tuple[list[str], np.ndarray]:
    """Rows of `id, v1, ..., v_d`; consistent width required."""
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}: row {row_no}: non-numeric value ({exc})") from None
            if not values:
                raise ValueError(f"{path}: row {row_no}: no values after the id")
            if rows and len(values) != len(rows[0]):
                raise ValueError(f"{path}: row {row_no}: expected {len(rows[0])} values, got {len(values)}")
            ids.append(row[0])
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: empty file")
    return ids, np.array(rows)


def read_soft_labels_csv(path, tol: float = 1e-6) -> tuple[list[str], np.ndarray]:
    """Rows of `id, p1, ..., p_C`; every row must be a probability vector."""
    ids, probs = read_embeddings_csv(path)
    for i, row in enumerate(probs):
        if np.any(row < 0):
            raise ValueError(f"{path}: row {i + 1} (id {ids[i]}): negative probability")
        if abs(float(row.sum()) - 1.0) > tol:
            raise ValueError(f"{path}: row {i + 1} (id {ids[i]}): probabilities sum to {row.sum()!r}")
    return ids, probs


def align_soft_labels(emb_ids, emb: np.ndarray, label_ids, labels: np.ndarray) -> SoftLabelBatch:
    """Reorder soft-label rows to the embedding order; ids must match as sets."""
    missing = [i for i in emb_ids if i not in set(label_ids)]
    extra = [i for i in label_ids if i not in set(emb_ids)]
    if missing or extra:
        raise ValueError(
            f"id mismatch between embeddings and soft labels: missing labels for {missing}, "
            f"labels without embeddings for {extra}"
        )
    index = {name: i for i, name in enumerate(label_ids)}
    ordered = labels[[index[name] for name in emb_ids]]
    return SoftLabelBatch(embeddings=emb, targets=ordered)


def heads_to_json(heads: HeadParams) -> str:
    doc = {
        "d_emb": heads.d_emb,
        "C": heads.n_heads,
        "heads": [
            {"mu": heads.mus[j].tolist(), "w": heads.ws[j].tolist(), "log_sigma2": float(heads.log_sigma2s[j])}
            for j in range(heads.n_heads)
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def heads_from_json(text: str) -> HeadParams:
    doc = json.loads(text)
    mus = np.array([h["mu"] for h in doc["heads"]])
    ws = np.array([h["w"] for h in doc["heads"]])
    ls2 = np.array([h["log_sigma2"] for h in doc["heads"]])
    heads = HeadParams(mus=mus, ws=ws, log_sigma2s=ls2)
    if heads.d_emb != doc["d_emb"] or heads.n_heads != doc["C"]:
        raise ValueError("header fields disagree with the stored heads")
    return heads
