"""Binned calibration metrics (ECE, UCE, classwise variants) and reliability data.

Bins are M equal-width intervals over [0, 1], left-closed/right-open, with the
last bin right-closed so a statistic of exactly 1 is valid. Empty bins carry
zero weight. Per-bin accumulation runs in record order (np.bincount), so the
results agree bit-for-bit with a naive sequential double loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .mathops import normalized_entropy

DEFAULT_BINS = 15


@dataclass(frozen=True)
class EvalRecord:
    """One input's MC-integrated prediction.

    predicted is argmax(probs) with lowest-index tie-break; confidence the max
    probability; uncertainty the normalized entropy of probs.
    """

    probs: np.ndarray
    predicted: int
    confidence: float
    uncertainty: float
    label: int

    @classmethod
    def from_probs(cls, probs: np.ndarray, label: int) -> "EvalRecord":
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.shape[0] < 2:
            raise InvalidInputError("probs must be a vector of length >= 2")
        if abs(float(probs.sum()) - 1.0) > 1e-6:
            raise InvalidInputError("probs must sum to 1")
        return cls(
            probs=probs,
            predicted=int(np.argmax(probs)),
            confidence=float(np.max(probs)),
            uncertainty=float(normalized_entropy(probs)),
            label=int(label),
        )


def records_from_probs(probs: np.ndarray, labels: np.ndarray) -> list[EvalRecord]:
    """Build records for a (n, C) probability matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    return [EvalRecord.from_probs(p, int(y)) for p, y in zip(probs, labels)]


def records_from_archive(archive, scaler=None) -> list[EvalRecord]:
    """MC-integrate an archive's logits (optionally scaled) into records."""
    from .mathops import softmax

    logits = archive.logits
    if scaler is not None:
        logits = scaler.transform(logits)
    probs = softmax(logits).mean(axis=1)
    return records_from_probs(probs, archive.labels)


@dataclass
class BinnedReliability:
    """Per-bin counts and statistics backing reliability diagrams.

    mode is "confidence" (mean confidence vs accuracy) or "uncertainty" (mean
    uncertainty vs top-1 error). Empty bins report 0 for both statistics.
    """

    n_bins: int
    mode: str
    counts: np.ndarray
    mean_stat: np.ndarray
    outcome_rate: np.ndarray

    def weighted_gap(self) -> float:
        """Sum over bins of (count/n)*|outcome - mean_stat|; equals ece()/uce()."""
        n = int(self.counts.sum())
        total = 0.0
        for m in range(self.n_bins):
            if self.counts[m] > 0:
                w = self.counts[m] / n
                total += w * abs(self.outcome_rate[m] - self.mean_stat[m])
        return total


def bin_index(v: float, n_bins: int) -> int:
    """Equal-width bin of v in [0, 1]; v = 1 maps to the last bin."""
    if not 0.0 <= v <= 1.0:
        raise InvalidInputError(f"bin statistic {v} outside [0, 1]")
    return min(int(v * n_bins), n_bins - 1)


def _require_records(records):
    if len(records) == 0:
        raise InvalidInputError("metric needs at least one record")


def _bin_stats(stat, outcome, n_bins):
    """Per-bin counts, stat sums and outcome sums, accumulated in record order."""
    idx = np.minimum((stat * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    stat_sum = np.bincount(idx, weights=stat, minlength=n_bins)
    outcome_sum = np.bincount(idx, weights=outcome, minlength=n_bins)
    return counts, stat_sum, outcome_sum


def _binned_gap(stat, outcome, n_bins) -> float:
    counts, stat_sum, outcome_sum = _bin_stats(stat, outcome, n_bins)
    n = stat.shape[0]
    total = 0.0
    for m in range(n_bins):
        if counts[m] > 0:
            total += (counts[m] / n) * abs(outcome_sum[m] / counts[m] - stat_sum[m] / counts[m])
    return total


def ece(records, n_bins: int = DEFAULT_BINS) -> float:
    """Expected calibration error: confidence-binned |accuracy - confidence|."""
    _require_records(records)
    conf = np.array([r.confidence for r in records])
    correct = np.array([float(r.predicted == r.label) for r in records])
    return _binned_gap(conf, correct, n_bins)


def uce(records, n_bins: int = DEFAULT_BINS) -> float:
    """Uncertainty calibration error: uncertainty-binned |error - uncertainty|."""
    _require_records(records)
    unc = np.array([r.uncertainty for r in records])
    wrong = np.array([float(r.predicted != r.label) for r in records])
    return _binned_gap(unc, wrong, n_bins)


def classwise_uce(records, n_bins: int = DEFAULT_BINS) -> tuple[float, np.ndarray, int]:
    """Mean over classes of UCE restricted to records with true label c.

    Classes without records are excluded from the mean; returns
    (cUCE, per-class vector with NaN for empty classes, number skipped).
    """
    _require_records(records)
    n_classes = records[0].probs.shape[0]
    per_class = np.full(n_classes, np.nan)
    for c in range(n_classes):
        subset = [r for r in records if r.label == c]
        if subset:
            per_class[c] = uce(subset, n_bins)
    populated = per_class[~np.isnan(per_class)]
    skipped = n_classes - populated.shape[0]
    # sequential sum in ascending class order, so the result is bit-identical
    # to a naive per-class loop
    total = 0.0
    for v in populated:
        total += float(v)
    return total / populated.shape[0], per_class, skipped


def classwise_ece(records, n_bins: int = DEFAULT_BINS) -> float:
    """One-vs-rest classwise ECE: bin all records by probs[c] for each class.

    Per class the gap is |frequency(label = c in bin) - mean probs[c] in bin|,
    weighted by bin occupancy; the result is the mean over classes.
    """
    _require_records(records)
    n_classes = records[0].probs.shape[0]
    probs = np.array([r.probs for r in records])
    labels = np.array([r.label for r in records])
    total = 0.0
    for c in range(n_classes):
        total += _binned_gap(probs[:, c], (labels == c).astype(np.float64), n_bins)
    return total / n_classes


def reliability_data(records, n_bins: int = DEFAULT_BINS, mode: str = "uncertainty") -> BinnedReliability:
    """Per-bin reliability tuples; uce()/ece() are recomputable exactly from it."""
    _require_records(records)
    if mode == "confidence":
        stat = np.array([r.confidence for r in records])
        outcome = np.array([float(r.predicted == r.label) for r in records])
    elif mode == "uncertainty":
        stat = np.array([r.uncertainty for r in records])
        outcome = np.array([float(r.predicted != r.label) for r in records])
    else:
        raise InvalidInputError(f"unknown reliability mode {mode!r}")
    counts, stat_sum, outcome_sum = _bin_stats(stat, outcome, n_bins)
    nonzero = counts > 0
    mean_stat = np.where(nonzero, stat_sum / np.maximum(counts, 1), 0.0)
    outcome_rate = np.where(nonzero, outcome_sum / np.maximum(counts, 1), 0.0)
    return BinnedReliability(
        n_bins=n_bins, mode=mode, counts=counts, mean_stat=mean_stat, outcome_rate=outcome_rate
    )


def nll(records) -> float:
    """Negative log-likelihood, -sum log probs[label], clamped at 1e-12."""
    _require_records(records)
    total = 0.0
    for r in records:
        total -= float(np.log(max(r.probs[r.label], 1e-12)))
    return total


def accuracy(records) -> float:
    _require_records(records)
    return sum(1 for r in records if r.predicted == r.label) / len(records)


def mean_uncertainty(records) -> float:
    _require_records(records)
    return sum(r.uncertainty for r in records) / len(records)
