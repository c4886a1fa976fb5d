import numpy as np
import pytest

from paco_lab.data import (LongTailProfile, class_frequency, exponential_profile,
                           load_dataset, pareto_profile, sample_gaussian_mixture,
                           save_dataset)
from paco_lab.errors import ContractViolation
from paco_lab.numerics import make_rng


def test_exponential_profile_balanced():
    prof = exponential_profile(10, 200, 1.0)
    assert np.all(prof.counts == 200)


def test_exponential_profile_cifar_convention():
    prof = exponential_profile(100, 500, 100.0)
    assert prof.counts[0] == 500
    assert prof.counts[-1] == 5


def test_exponential_profile_monotone_and_ratio():
    for beta in (1.0, 10.0, 50.0, 100.0):
        prof = exponential_profile(20, 500, beta)
        assert np.all(np.diff(prof.counts) <= 0)
        tail = prof.counts[-1]
        ratio = prof.counts[0] / tail
        assert beta * (1 - 2 / tail) <= ratio <= beta * (1 + 2 / tail)


def test_exponential_profile_rejects_empty_tail():
    with pytest.raises(ContractViolation):
        exponential_profile(10, 50, 100.0)


def test_pareto_profile_endpoints():
    prof = pareto_profile(1000, 1280, 5, 6.0)
    assert prof.counts[0] == 1280
    assert prof.counts[-1] == 5
    assert np.all(np.diff(prof.counts) <= 0)


def test_pareto_profile_two_classes():
    prof = pareto_profile(2, 1280, 5, 6.0)
    assert prof.counts.tolist() == [1280, 5]


def test_pareto_profile_total_near_documented_scale():
    # loose check by construction: 1000 classes spanning 5..1280 at power 6
    # should total ~115.8K within 20%
    prof = pareto_profile(1000, 1280, 5, 6.0)
    assert abs(prof.total - 115_800) / 115_800 < 0.20


def test_class_frequency_uniform_and_ratio():
    prof = LongTailProfile(np.full(10, 37))
    q = class_frequency(prof)
    assert np.allclose(q, 0.1, atol=1e-15)
    q = class_frequency(LongTailProfile(np.array([3, 1])))
    assert np.allclose(q, [0.75, 0.25], atol=1e-15)
    assert q.sum() == pytest.approx(1.0, abs=1e-12)


def test_class_frequency_pareto_head_tail_ratio():
    prof = pareto_profile(1000, 1280, 5, 6.0)
    q = class_frequency(prof)
    assert q[0] / q[-1] == pytest.approx(256.0, abs=1e-9)


def test_mixture_near_zero_noise_recovers_means():
    prof = LongTailProfile(np.array([4, 3]))
    ds = sample_gaussian_mixture(prof, dim=8, noise_sigma=1e-12, test_per_class=2, seed=0)
    for i in ds.train_idx:
        assert np.allclose(ds.features[i], ds.class_means[ds.labels[i]], atol=1e-9)


def test_mixture_deterministic_for_fixed_seed():
    prof = exponential_profile(5, 40, 10.0)
    a = sample_gaussian_mixture(prof, 16, 0.35, 10, seed=7)
    b = sample_gaussian_mixture(prof, 16, 0.35, 10, seed=7)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    c = sample_gaussian_mixture(prof, 16, 0.35, 10, seed=8)
    assert not np.array_equal(a.features, c.features)


def test_mixture_features_unit_norm_and_split_counts():
    prof = exponential_profile(6, 50, 25.0)
    ds = sample_gaussian_mixture(prof, 12, 0.4, 9, seed=3)
    assert np.allclose(np.linalg.norm(ds.features, axis=1), 1.0, atol=1e-12)
    train_labels = ds.labels[ds.train_idx]
    for c in range(6):
        assert np.sum(train_labels == c) == prof.counts[c]
    test_labels = ds.labels[ds.test_idx]
    assert np.all(np.bincount(test_labels, minlength=6) == 9)


def test_mixture_class_mean_dots_match_monte_carlo():
    # pairwise dot products of random unit means center on zero, like a direct
    # Monte-Carlo draw of unit-vector pairs
    prof = LongTailProfile(np.full(20, 10))
    ds = sample_gaussian_mixture(prof, 32, 0.35, 2, seed=11)
    dots = []
    for i in range(20):
        for j in range(i + 1, 20):
            dots.append(float(ds.class_means[i] @ ds.class_means[j]))
    rng = make_rng(999)
    mc = []
    for _ in range(5000):
        u = rng.standard_normal(32)
        v = rng.standard_normal(32)
        mc.append(float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v))))
    # matching scale: both means near 0 within 3 sigma of the MC spread
    sigma = np.std(mc) / np.sqrt(len(dots))
    assert abs(np.mean(dots) - np.mean(mc)) < 4 * np.std(mc) / np.sqrt(len(dots)) + 0.05
    assert abs(np.mean(dots)) < 0.1


def test_dataset_roundtrip(tmp_path):
    prof = exponential_profile(4, 30, 6.0)
    ds = sample_gaussian_mixture(prof, 8, 0.3, 5, seed=2)
    path = tmp_path / "ds.txt"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert np.array_equal(loaded.features, ds.features)
    assert np.array_equal(loaded.labels, ds.labels)
    assert np.array_equal(loaded.profile.counts, prof.counts)
    assert loaded.dim == ds.dim
    assert loaded.seed == ds.seed
    assert loaded.noise_sigma == ds.noise_sigma
    assert np.array_equal(loaded.train_idx, ds.train_idx)
    assert np.array_equal(loaded.test_idx, ds.test_idx)


def test_dataset_file_line_count(tmp_path):
    prof = exponential_profile(4, 30, 6.0)
    ds = sample_gaussian_mixture(prof, 8, 0.3, 5, seed=2)
    path = tmp_path / "ds.txt"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    assert len(lines) == prof.total + 4 * 5 + 1
