"""Predictive and representational multiplicity of risk-equivalent ensembles.

PM is the sample-averaged standard deviation of the ensemble's outputs. RM is
the negated top-T SVCCA similarity, averaged over all unordered variant pairs.
Confabulation scores are the entropy of the predicted-label histogram per
sample.
"""

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from repmult.errors import AlignmentError, DataError, ShapeError
from repmult.linalg import pearson
from repmult.svcca import (
    DEFAULT_TOP_T,
    DEFAULT_VARIANCE_FRACTION,
    svcca_correlations,
    svcca_similarity,
)


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PredictionTable:
    """Class probabilities of ``K`` variants over ``N`` samples, shape ``(K, N, C)``."""

    probs: np.ndarray
    dataset_fingerprint: str = ""

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 3:
            raise ShapeError(f"probs must be (K, N, C), got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise DataError("probabilities contain non-finite values")
        if p.size and (p.min() < -1e-12 or p.max() > 1 + 1e-12):
            raise DataError("probabilities must lie in [0, 1]")
        if p.size and np.max(np.abs(p.sum(axis=2) - 1.0)) > 1e-6:
            raise DataError("probability rows must sum to 1 within 1e-6")
        object.__setattr__(self, "probs", p)

    @property
    def variants(self):
        return self.probs.shape[0]

    @property
    def samples(self):
        return self.probs.shape[1]

    @property
    def classes(self):
        return self.probs.shape[2]

    @property
    def labels(self):
        # np.argmax returns the lowest index on ties
        return np.argmax(self.probs, axis=2)

    @classmethod
    def stack(cls, per_variant_probs, dataset_fingerprint=""):
        return cls(np.stack([np.asarray(p, dtype=np.float64) for p in per_variant_probs]),
                   dataset_fingerprint)

    def concat(self, other):
        """Pool the variants of two tables evaluated on the same samples."""
        if other.dataset_fingerprint != self.dataset_fingerprint or other.probs.shape[1:] != self.probs.shape[1:]:
            raise AlignmentError("cannot pool prediction tables from different sample sets")
        return PredictionTable(np.concatenate([self.probs, other.probs]), self.dataset_fingerprint)


@dataclass(frozen=True)
class RiskBand:
    target_accuracy: float
    epsilon: float = 0.01

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def admits(self, accuracy):
        return abs(accuracy - self.target_accuracy) < self.epsilon


@dataclass(frozen=True)
class ConfabulationEntry:
    sample_index: int
    score: float
    label_histogram: tuple
    distinct_labels: int
    pm: float


def _require_ensemble(t):
    if t.variants < 2:
        raise ShapeError(f"multiplicity needs K >= 2 variants, got {t.variants}")


def per_sample_pm(t, mode="probs"):
    """Per-sample standard deviation of the ensemble's outputs.

    ``mode="probs"`` (default) takes the population variance across variants
    of every class probability, averages it over classes and returns its square
    root. ``mode="labels"`` treats the predicted class index as a number.
    """
    _require_ensemble(t)
    if mode == "probs":
        # shifting by variant 0 keeps the variance exactly zero for identical variants
        var = (t.probs - t.probs[0]).var(axis=0)  # (N, C), divides by K
        return np.sqrt(var.mean(axis=1))
    if mode == "labels":
        lab = t.labels.astype(np.float64)
        return np.sqrt((lab - lab[0]).var(axis=0))
    raise ValueError(f"unknown PM mode {mode!r}")


def pm(t, subset=None, mode="probs"):
    """Mean per-sample PM over ``subset`` (all samples by default)."""
    values = per_sample_pm(t, mode)
    if subset is not None:
        idx = np.asarray(subset, dtype=np.int64).ravel()
        if idx.size == 0:
            raise DataError("empty sample subset")
        if idx.min() < 0 or idx.max() >= values.size:
            raise DataError(f"subset indices out of range [0, {values.size})")
        values = values[idx]
    return float(values.mean())


def rm_pair(z1, z2, variance_fraction=DEFAULT_VARIANCE_FRACTION, top_t=DEFAULT_TOP_T):
    return -svcca_similarity(svcca_correlations(z1, z2, variance_fraction), top_t)


def pairwise_svcca(zs, variance_fraction=DEFAULT_VARIANCE_FRACTION, top_t=DEFAULT_TOP_T):
    """SVCCA similarity of every unordered pair ``(i, j), i < j`` in lexicographic order."""
    return {
        (i, j): svcca_similarity(svcca_correlations(zs[i], zs[j], variance_fraction), top_t)
        for i, j in itertools.combinations(range(len(zs)), 2)
    }


def rm_ensemble(zs, variance_fraction=DEFAULT_VARIANCE_FRACTION, top_t=DEFAULT_TOP_T):
    """Mean pairwise RM over all ``K choose 2`` variant pairs."""
    if len(zs) < 2:
        raise ShapeError(f"rm_ensemble needs K >= 2 variants, got {len(zs)}")
    sims = pairwise_svcca(zs, variance_fraction, top_t)
    return -float(np.mean(list(sims.values())))


def label_entropy(histogram):
    counts = np.asarray(histogram, dtype=np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum()) if p.size > 1 else 0.0


def confabulation_scores(t):
    """Entropy (nats) of each sample's predicted-label histogram across variants."""
    _require_ensemble(t)
    labels = t.labels
    pms = per_sample_pm(t)
    out = []
    for n in range(t.samples):
        hist = np.bincount(labels[:, n], minlength=t.classes)
        out.append(ConfabulationEntry(
            sample_index=n,
            score=label_entropy(hist),
            label_histogram=tuple(int(c) for c in hist),
            distinct_labels=int(np.count_nonzero(hist)),
            pm=float(pms[n]),
        ))
    return out


def top_confabulators(entries, n=16):
    """Indices of the ``n`` most confabulated samples.

    Ordered by score, then per-sample PM (both descending), then sample index.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > len(entries):
        warnings.warn(
            f"requested top {n} but only {len(entries)} samples exist; returning all",
            TruncationWarning,
            stacklevel=2,
        )
    ranked = sorted(entries, key=lambda e: (-e.score, -e.pm, e.sample_index))
    return [e.sample_index for e in ranked[:n]]


def pcc_rm_pm(svcca_values, pm_values):
    """Pearson correlation of per-strategy SVCCA (inverted RM) with per-strategy PM.

    Aligned multiplicities show up as a negative coefficient.
    """
    return pearson(svcca_values, pm_values)
