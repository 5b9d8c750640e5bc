"""Binning-based calibration metrics for binary forecasts.

Predictions are positive-class probabilities. The negative class is handled
by the complement construction: its predictions are ``1 - p`` and its labels
are the inverted labels.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, LengthMismatch, ProbabilityOutOfRange

ACCURACY = "accuracy"
CLASSWISE_ECE = "classwise_ece"


def bin_index(p, M=20):
    """1-based bin ordinal of probability ``p`` among ``M`` equal-width bins.

    Bin ``j`` is ``[(j-1)/M, j/M)``; the last bin is closed so ``p = 1.0``
    lands in bin ``M``.
    """
    if not 0.0 <= p <= 1.0:
        raise ProbabilityOutOfRange(f"probability {p!r} outside [0, 1]")
    return min(int(math.floor(p * M)) + 1, M)


def _bin_indices(p, M):
    # vectorised bin_index, 0-based
    return np.minimum(np.floor(p * M).astype(np.int64), M - 1)


def _as_pred_label(preds, labels):
    p = np.asarray(preds, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if p.shape != y.shape:
        raise LengthMismatch(f"{p.size} predictions vs {y.size} labels")
    if p.size == 0:
        raise EmptyInput("no predictions")
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise ProbabilityOutOfRange("predictions must lie in [0, 1]")
    return p, y.astype(bool)


@dataclass(frozen=True)
class CalibrationBins:
    """Per-class bin aggregates.

    Arrays have shape ``(2, M)``; row 0 is the negative class, row 1 the
    positive class. ``mean_pred`` and ``emp_rate`` are NaN for empty bins.
    """

    M: int
    n: int
    counts: np.ndarray
    mean_pred: np.ndarray
    emp_rate: np.ndarray

    def edges(self, j):
        """Interval ``(lo, hi)`` of 1-based bin ``j``."""
        return (j - 1) / self.M, j / self.M


def aggregate_bins(preds, labels, M=20):
    p, y = _as_pred_label(preds, labels)
    if M < 1:
        raise ValueError("M must be positive")
    counts = np.zeros((2, M), dtype=np.int64)
    sum_pred = np.zeros((2, M))
    sum_pos = np.zeros((2, M))
    for k, (pk, yk) in enumerate(((1.0 - p, ~y), (p, y))):
        idx = _bin_indices(pk, M)
        counts[k] = np.bincount(idx, minlength=M)
        sum_pred[k] = np.bincount(idx, weights=pk, minlength=M)
        sum_pos[k] = np.bincount(idx, weights=yk.astype(float), minlength=M)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_pred = np.where(counts > 0, sum_pred / counts, np.nan)
        emp_rate = np.where(counts > 0, sum_pos / counts, np.nan)
    return CalibrationBins(M=M, n=int(p.size), counts=counts,
                           mean_pred=mean_pred, emp_rate=emp_rate)


def class_ece_terms(bins):
    """Per-class bin-weighted calibration gap, shape ``(2,)``."""
    occupied = bins.counts > 0
    gap = np.where(occupied, np.abs(bins.emp_rate - bins.mean_pred), 0.0)
    return (bins.counts / bins.n * gap).sum(axis=1)


def classwise_ece(bins):
    """Classwise expected calibration error averaged over the two classes."""
    return float(class_ece_terms(bins).mean())


def occupancy_fraction(bins, k=1):
    """Fraction of the ``M`` bins of class ``k`` holding at least one prediction."""
    return int(np.count_nonzero(bins.counts[k])) / bins.M


def constrained_classwise_ece(preds, labels, spec=None):
    """Classwise-ECE, forced to 1.0 when predictions crowd too few bins.

    The occupancy test uses the positive class only.
    """
    spec = spec or MetricSpec(CLASSWISE_ECE)
    bins = aggregate_bins(preds, labels, spec.bins)
    occupied = np.count_nonzero(bins.counts[1])
    # compare on counts to dodge 0.8 * 20 != 16 style rounding
    if occupied < spec.min_occupancy * spec.bins - 1e-9:
        return 1.0
    return classwise_ece(bins)


def accuracy(preds, labels):
    """Share of games whose predicted class matches; ``p >= 0.5`` means class 1."""
    p, y = _as_pred_label(preds, labels)
    return float(np.mean((p >= 0.5) == y))


def reliability_table(bins):
    rows = []
    for k in (0, 1):
        for j in range(1, bins.M + 1):
            lo, hi = bins.edges(j)
            c = int(bins.counts[k, j - 1])
            rows.append({
                "class": k,
                "bin_lo": lo,
                "bin_hi": hi,
                "count": c,
                "mean_pred": float(bins.mean_pred[k, j - 1]) if c else None,
                "emp_rate": float(bins.emp_rate[k, j - 1]) if c else None,
            })
    return rows


RELIABILITY_COLUMNS = ["class", "bin_lo", "bin_hi", "count", "mean_pred", "emp_rate"]


def write_reliability_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RELIABILITY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: ("" if r[c] is None else r[c]) for c in RELIABILITY_COLUMNS})


def read_reliability_csv(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows.append({
                "class": int(r["class"]),
                "bin_lo": float(r["bin_lo"]),
                "bin_hi": float(r["bin_hi"]),
                "count": int(r["count"]),
                "mean_pred": float(r["mean_pred"]) if r["mean_pred"] else None,
                "emp_rate": float(r["emp_rate"]) if r["emp_rate"] else None,
            })
    return rows


@dataclass(frozen=True)
class MetricSpec:
    """Which metric drives a selection branch, and how it is scored.

    Args:
        kind: ``"accuracy"`` (maximised) or ``"classwise_ece"`` (minimised).
        bins: number of equal-width bins for the ECE.
        min_occupancy: share of positive-class bins that must be non-empty,
            otherwise the ECE is set to its maximum of 1.0.
    """

    kind: str = CLASSWISE_ECE
    bins: int = 20
    min_occupancy: float = 0.8

    def __post_init__(self):
        if self.kind not in (ACCURACY, CLASSWISE_ECE):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if not 0.0 < self.min_occupancy <= 1.0:
            raise ValueError("min_occupancy must lie in (0, 1]")

    @property
    def direction(self):
        return "maximize" if self.kind == ACCURACY else "minimize"

    @property
    def worst(self):
        return 0.0 if self.kind == ACCURACY else 1.0

    def score(self, preds, labels):
        if self.kind == ACCURACY:
            return accuracy(preds, labels)
        return constrained_classwise_ece(preds, labels, self)

    def better(self, a, b):
        """True if score ``a`` is strictly better than ``b``."""
        return a > b if self.kind == ACCURACY else a < b

    def key(self, score):
        """Sort key where smaller is better."""
        return -score if self.kind == ACCURACY else score
