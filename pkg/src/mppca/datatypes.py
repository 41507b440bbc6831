"""Shared record types: observation sets and categorical predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class Dataset:
    """Ordered observations (n, d) with optional integer category labels (n,)."""

    x: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise ValueError("x must be an (n, d) matrix")
        object.__setattr__(self, "x", x)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (x.shape[0],):
                raise ValueError("labels must have one entry per observation")
            object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class Prediction:
    """Normalized probability vector over existing categories plus mass on
    "none of these" (a potential new category). `new` is 0 for models with a
    closed category set."""

    categories: np.ndarray
    new: float = 0.0

    def __post_init__(self):
        cats = np.asarray(self.categories, dtype=float)
        object.__setattr__(self, "categories", cats)
        object.__setattr__(self, "new", float(self.new))
        if cats.ndim != 1 or cats.size == 0:
            raise ValueError("categories must be a nonempty vector")
        if np.any(cats < -1e-12) or self.new < -1e-12:
            raise ValueError("probabilities must be nonnegative")
        total = float(np.sum(cats)) + self.new
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {total}")

    @classmethod
    def from_log_scores(cls, log_scores: np.ndarray, log_new: float | None = None) -> "Prediction":
        """Normalize unnormalized log scores (shift-invariant)."""
        log_scores = np.asarray(log_scores, dtype=float)
        if log_new is None:
            probs = np.exp(log_scores - logsumexp(log_scores))
            return cls(categories=probs / probs.sum(), new=0.0)
        stacked = np.append(log_scores, log_new)
        probs = np.exp(stacked - logsumexp(stacked))
        probs = probs / probs.sum()
        return cls(categories=probs[:-1], new=float(probs[-1]))

    def full_vector(self) -> np.ndarray:
        """Probabilities with the new-category mass appended as the last entry."""
        return np.append(self.categories, self.new)

    @property
    def argmax(self) -> int:
        """Index of the most probable bucket; len(categories) means "new"."""
        return int(np.argmax(self.full_vector()))
