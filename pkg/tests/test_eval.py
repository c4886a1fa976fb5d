import numpy as np
import pytest

from paco_lab.data import LongTailProfile
from paco_lab.errors import ContractViolation, DegenerateInputError
from paco_lab.evaluation import (balance_metric, bucket_accuracy, classify_batch,
                                 nearest_center_classify)
from paco_lab.losses import CenterBank
from paco_lab.numerics import l2_normalize, make_rng


def test_nearest_center_orthonormal():
    bank = CenterBank(np.eye(4), np.full(4, 0.25))
    assert nearest_center_classify(np.eye(4)[2], bank) == 2


def test_nearest_center_tie_breaks_low_index():
    bank = CenterBank(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.full(3, 1 / 3))
    assert nearest_center_classify(np.array([1.0, 0.0]), bank) == 0


def test_nearest_center_matches_exhaustive_scan():
    rng = make_rng(0)
    for _ in range(50):
        n, dim = int(rng.integers(2, 12)), int(rng.integers(2, 9))
        bank = CenterBank(rng.standard_normal((n, dim)), np.full(n, 1.0 / n))
        f = l2_normalize(rng.standard_normal(dim))
        best, best_score = 0, -np.inf
        for k in range(n):
            score = float(bank.centers[k] @ f)
            if score > best_score:
                best, best_score = k, score
        assert nearest_center_classify(f, bank) == best


def test_nearest_center_temperature_invariance():
    rng = make_rng(1)
    bank = CenterBank(rng.standard_normal((6, 5)), np.full(6, 1 / 6))
    f = l2_normalize(rng.standard_normal(5))
    ref = nearest_center_classify(f, bank)
    for tau in (0.05, 0.2, 1.0, 7.3):
        scaled = CenterBank(bank.centers / tau, bank.class_freq)
        assert nearest_center_classify(f, scaled) == ref


def test_bucket_accuracy_perfect_classifier():
    prof = LongTailProfile(np.array([500, 150, 90, 15]))
    labels = np.repeat(np.arange(4), 10)
    rep = bucket_accuracy(labels, labels, prof, (100, 20))
    assert rep.many_acc == rep.medium_acc == rep.few_acc == rep.all_acc == 1.0


def test_bucket_partition_is_exhaustive_and_disjoint():
    prof = LongTailProfile(np.array([500, 150, 100, 90, 20, 15]))
    counts = prof.counts
    many = counts > 100
    few = counts < 20
    medium = ~many & ~few
    assert np.all(many.astype(int) + few.astype(int) + medium.astype(int) == 1)
    # boundary counts (exactly 100 / exactly 20) land in Medium
    assert medium[2] and medium[4]


def test_bucket_accuracy_degenerate_all_many():
    prof = LongTailProfile(np.full(3, 500))
    labels = np.repeat(np.arange(3), 4)
    rep = bucket_accuracy(labels, labels, prof, (100, 20))
    assert rep.many_acc == 1.0
    assert rep.medium_acc is None
    assert rep.few_acc is None


def test_bucket_accuracy_collapsed_tail():
    prof = LongTailProfile(np.array([500, 300, 10, 5]))
    labels = np.repeat(np.arange(4), 10)
    preds = labels.copy()
    preds[labels >= 2] = 0  # tail classes always wrong
    rep = bucket_accuracy(preds, labels, prof, (100, 20))
    assert rep.few_acc == 0.0
    assert rep.many_acc == 1.0


def test_bucket_all_acc_is_class_mean_on_balanced_test():
    rng = make_rng(2)
    prof = LongTailProfile(np.array([500, 150, 15]))
    labels = np.repeat(np.arange(3), 50)
    preds = rng.integers(0, 3, labels.size)
    rep = bucket_accuracy(preds, labels, prof, (100, 20))
    assert rep.all_acc == pytest.approx(np.mean(rep.per_class_acc), abs=1e-12)


def test_bucket_relabel_invariance_on_balanced_profile():
    rng = make_rng(3)
    prof = LongTailProfile(np.full(5, 100))
    labels = np.repeat(np.arange(5), 20)
    preds = rng.integers(0, 5, labels.size)
    rep = bucket_accuracy(preds, labels, prof, (300, 20))
    perm = rng.permutation(5)
    rep_p = bucket_accuracy(perm[preds], perm[labels], prof, (300, 20))
    assert rep_p.all_acc == pytest.approx(rep.all_acc, abs=1e-15)
    assert sorted(rep_p.per_class_acc) == pytest.approx(sorted(rep.per_class_acc))


def test_bucket_rejects_bad_thresholds():
    prof = LongTailProfile(np.array([10, 5]))
    with pytest.raises(ContractViolation):
        bucket_accuracy(np.zeros(2, int), np.arange(2), prof, (20, 100))


def test_balance_metric_uniform_and_two_point():
    assert balance_metric(np.full(7, 3.3)) == 0.0
    assert balance_metric([2.0, 0.0]) == pytest.approx(1.0, abs=1e-15)


def test_balance_metric_matches_two_pass_oracle():
    rng = make_rng(4)
    v = rng.uniform(0.1, 5.0, 100)
    mean = sum(float(x) for x in v) / 100
    var = sum((float(x) - mean) ** 2 for x in v) / 100
    assert balance_metric(v) == pytest.approx(np.sqrt(var) / mean, rel=1e-12)


def test_balance_metric_all_zero_flagged():
    with pytest.raises(DegenerateInputError):
        balance_metric(np.zeros(5))


def test_classify_batch_matches_single():
    rng = make_rng(5)
    bank = CenterBank(rng.standard_normal((4, 6)), np.full(4, 0.25))
    feats = np.stack([l2_normalize(rng.standard_normal(6)) for _ in range(10)])
    batch = classify_batch(feats, bank)
    single = [nearest_center_classify(f, bank) for f in feats]
    assert np.array_equal(batch, single)
