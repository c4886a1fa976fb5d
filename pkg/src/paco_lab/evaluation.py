"""Balanced-test evaluation: nearest-center inference and Many/Medium/Few buckets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegenerateInputError
from .losses import CenterBank
from .data import LongTailProfile


def nearest_center_classify(feature, bank: CenterBank) -> int:
    """argmax_k c_k . feature; ties resolve to the lowest class index."""
    feature = np.asarray(feature, dtype=np.float64)
    scores = bank.centers @ feature
    return int(np.argmax(scores))


def classify_batch(features: np.ndarray, bank: CenterBank) -> np.ndarray:
    scores = np.atleast_2d(features) @ bank.centers.T
    return np.argmax(scores, axis=1)


@dataclass
class BucketReport:
    many_acc: float | None
    medium_acc: float | None
    few_acc: float | None
    all_acc: float
    bucket_thresholds: tuple[int, int]  # (many_min, few_max)
    per_class_acc: np.ndarray

    def csv_row(self, method: str, seed: int, cov_grad_norm: float) -> str:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return ",".join([method, str(seed), fmt(self.many_acc), fmt(self.medium_acc),
                         fmt(self.few_acc), repr(float(self.all_acc)),
                         repr(float(cov_grad_norm))])


BUCKET_CSV_HEADER = "method,seed,many,medium,few,all,cov_grad_norm"


def bucket_accuracy(predictions, labels, profile: LongTailProfile,
                    thresholds: tuple[int, int] = (100, 20)) -> BucketReport:
    """Class-mean accuracies per count bucket.

    A class is Many when its training count exceeds many_min, Few when the
    count is below few_max, Medium otherwise. Empty buckets report None.
    """
    many_min, few_max = thresholds
    if many_min <= few_max:
        raise ContractViolation(f"need many_min > few_max, got {thresholds}")
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ContractViolation("predictions and labels must align")
    n = profile.n_classes
    per_class = np.zeros(n)
    for c in range(n):
        mask = labels == c
        if not np.any(mask):
            raise ContractViolation(f"class {c} absent from the test labels")
        per_class[c] = float(np.mean(predictions[mask] == labels[mask]))
    counts = profile.counts
    many = counts > many_min
    few = counts < few_max
    medium = ~many & ~few

    def bucket_mean(mask):
        return float(np.mean(per_class[mask])) if np.any(mask) else None

    return BucketReport(
        many_acc=bucket_mean(many),
        medium_acc=bucket_mean(medium),
        few_acc=bucket_mean(few),
        all_acc=float(np.mean(predictions == labels)),
        bucket_thresholds=(many_min, few_max),
        per_class_acc=per_class,
    )


def balance_metric(grad_norms) -> float:
    """Coefficient of variation (population std / mean); 0 means perfectly balanced."""
    v = np.asarray(grad_norms, dtype=np.float64)
    if v.size == 0:
        raise ContractViolation("empty gradient-norm vector")
    if np.any(v < 0):
        raise ContractViolation("gradient norms must be nonnegative")
    mean = float(np.mean(v))
    if mean == 0.0:
        raise DegenerateInputError("all-zero gradient norms: balance is undefined")
    return float(np.std(v) / mean)
