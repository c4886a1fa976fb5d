import numpy as np
import pytest

from paco_lab.data import LongTailProfile, exponential_profile, sample_gaussian_mixture
from paco_lab.errors import TrainingDiverged
from paco_lab.evaluation import classify_batch
from paco_lab.losses import CenterBank, PacoConfig, cross_entropy_loss, multitask_loss, paco_loss, supcon_loss
from paco_lab.numerics import l2_normalize_rows, make_rng
from paco_lab.queue import MomentumQueue, build_contrast_set, enqueue_batch
from paco_lab.trainer import (LinearProbe, ProbeConfig, TrainConfig, batch_loss_and_grads,
                              encode, grad_norm_profile, head, linear_probe,
                              load_checkpoint, save_checkpoint, sgd_momentum_step, train,
                              write_trace_csv)


def tiny_dataset(seed=0, counts=(30, 30), dim=8, sigma=0.1, test=10):
    prof = LongTailProfile(np.array(counts))
    return sample_gaussian_mixture(prof, dim, sigma, test, seed)


# ------------------------------------------------------------ sgd momentum

def test_sgd_plain_gradient_step():
    p, v = np.array([1.0, 2.0]), np.zeros(2)
    g = np.array([0.5, -0.5])
    p2, v2 = sgd_momentum_step(p, g, v, lr=1.0, mu=0.0)
    assert np.array_equal(p2, p - g)
    assert np.array_equal(v2, g)


def test_sgd_inertia_moves_params_without_gradient():
    p = np.array([1.0])
    v = np.array([2.0])
    p2, v2 = sgd_momentum_step(p, np.zeros(1), v, lr=0.1, mu=0.9)
    assert p2[0] == pytest.approx(1.0 - 0.1 * 0.9 * 2.0, abs=1e-15)
    assert v2[0] == pytest.approx(1.8, abs=1e-15)


def test_sgd_three_step_hand_unrolled():
    lr, mu = 0.1, 0.9
    grads = [1.0, -2.0, 0.5]
    p, v = 3.0, 0.0
    pa, va = np.array([3.0]), np.array([0.0])
    for g in grads:
        v = mu * v + g
        p = p - lr * v
        pa, va = sgd_momentum_step(pa, np.array([g]), va, lr, mu)
        assert pa[0] == pytest.approx(p, abs=1e-15)
        assert va[0] == pytest.approx(v, abs=1e-15)


# ------------------------------------------------------------ training loop

def test_zero_epochs_returns_initial_model_and_empty_trace():
    ds = tiny_dataset()
    cfg = TrainConfig(loss_kind="paco", epochs=0, queue_capacity=16, seed=1)
    model, centers, trace = train(ds, cfg)
    assert len(trace) == 0
    assert len(model.queue) == 0
    rng = make_rng(cfg.seed)
    from paco_lab.trainer import init_encoder
    expected = init_encoder(ds.dim, ds.dim, rng)
    for (_, a), (_, b) in zip(model.query.arrays(), expected.arrays()):
        assert np.array_equal(a, b)


def test_training_is_bit_deterministic():
    ds = tiny_dataset(seed=5)
    cfg = TrainConfig(loss_kind="paco", epochs=4, batch_size=16, queue_capacity=32, seed=9)
    _, centers_a, trace_a = train(ds, cfg)
    _, centers_b, trace_b = train(ds, cfg)
    assert trace_a.equals(trace_b)
    assert np.array_equal(centers_a.centers, centers_b.centers)


def test_key_network_is_frozen_under_full_inertia():
    ds = tiny_dataset(seed=6)
    cfg = TrainConfig(loss_kind="paco", epochs=2, batch_size=16, queue_capacity=32,
                      momentum_m=1.0, seed=2)
    model, _, _ = train(ds, cfg)
    rng = make_rng(cfg.seed)
    from paco_lab.trainer import init_encoder
    init = init_encoder(ds.dim, ds.dim, rng)
    for (_, a), (_, b) in zip(model.key.arrays(), init.arrays()):
        assert np.array_equal(a, b)


def test_key_network_tracks_query_at_zero_inertia():
    ds = tiny_dataset(seed=6)
    cfg = TrainConfig(loss_kind="paco", epochs=2, batch_size=16, queue_capacity=32,
                      momentum_m=0.0, seed=2)
    model, _, _ = train(ds, cfg)
    for (_, a), (_, b) in zip(model.key.arrays(), model.query.arrays()):
        assert np.array_equal(a, b)


def test_queue_size_is_min_of_capacity_and_enqueued():
    ds = tiny_dataset(seed=7, counts=(20, 20))
    cfg = TrainConfig(loss_kind="paco", epochs=1, batch_size=16, queue_capacity=1000, seed=3)
    model, _, _ = train(ds, cfg)
    assert len(model.queue) == 40
    cfg2 = TrainConfig(loss_kind="paco", epochs=3, batch_size=16, queue_capacity=64, seed=3)
    model2, _, _ = train(ds, cfg2)
    assert len(model2.queue) == 64


def test_logged_losses_finite_and_positive_mass_split():
    ds = tiny_dataset(seed=8, counts=(40, 40, 40), dim=16)
    cfg = TrainConfig(loss_kind="paco", epochs=5, batch_size=32, queue_capacity=64, seed=4)
    _, _, trace = train(ds, cfg)
    for arr in (trace.loss, trace.l_sup, trace.l_supcon, trace.l_extra, trace.p_sup_mean):
        assert np.all(np.isfinite(arr))
    assert np.all((trace.p_sup_mean > 0) & (trace.p_sup_mean < 1))


def test_paco_mass_split_sums_to_one_per_batch():
    ds = tiny_dataset(seed=13, counts=(30, 30, 30), dim=8)
    cfg = TrainConfig(loss_kind="paco", epochs=1, batch_size=32, queue_capacity=32, seed=5)
    model, centers, _ = train(ds, cfg)
    rng = make_rng(77)
    feats = ds.features[ds.train_idx][:32]
    labels = ds.labels[ds.train_idx][:32]
    from paco_lab.trainer import _make_views
    u1, u2 = _make_views(feats, ds.noise_sigma, rng)
    x, _ = encode(model.query, u1)
    g, _ = head(model.query, x)
    xk, _ = encode(model.key, u2)
    gk, _ = head(model.key, xk)
    q_embs, q_labels = model.queue.snapshot()
    cand = np.concatenate([q_embs, g, gk])
    cand_labels = np.concatenate([q_labels, labels, labels])
    own = len(q_labels) + np.arange(32)
    stats, *_ = batch_loss_and_grads(cfg, model.query, centers, g, x, cand, cand_labels, own, labels)
    assert stats.p_sup + stats.p_supcon == pytest.approx(1.0, abs=1e-9)


def test_ce_on_separable_data_reaches_full_train_accuracy():
    ds = tiny_dataset(seed=1, counts=(50, 50), dim=8, sigma=0.1)
    cfg = TrainConfig(loss_kind="ce", epochs=30, batch_size=32, queue_capacity=32, seed=2)
    model, centers, _ = train(ds, cfg)
    x, _ = encode(model.query, ds.features[ds.train_idx])
    acc = np.mean(classify_batch(x, centers) == ds.labels[ds.train_idx])
    assert acc == 1.0


def test_divergence_aborts_with_step_index():
    ds = tiny_dataset(seed=2)
    cfg = TrainConfig(loss_kind="ce", epochs=3, batch_size=16, queue_capacity=16,
                      base_lr=1e12, seed=0)
    with pytest.raises(TrainingDiverged) as err:
        train(ds, cfg)
    assert err.value.step >= 0


# ---------------------------------------- batched path vs per-sample losses

def _batch_fixture(kind, seed=11):
    rng = make_rng(seed)
    dim, n, B, Q = 8, 5, 6, 20
    queue = MomentumQueue(Q, dim)
    enqueue_batch(queue, l2_normalize_rows(rng.standard_normal((Q, dim))),
                  rng.integers(0, n, Q))
    Gq = l2_normalize_rows(rng.standard_normal((B, dim)))
    Gk = l2_normalize_rows(rng.standard_normal((B, dim)))
    X = l2_normalize_rows(rng.standard_normal((B, dim)))
    labels = rng.integers(0, n, B)
    bank = CenterBank(0.5 * rng.standard_normal((n, dim)), np.full(n, 1 / n))
    cfg = TrainConfig(loss_kind=kind, alpha=0.05, temperature=0.2, queue_capacity=Q)
    q_embs, q_labels = queue.snapshot()
    cand = np.concatenate([q_embs, Gq, Gk])
    cand_labels = np.concatenate([q_labels, labels, labels])
    own = Q + np.arange(B)
    out = batch_loss_and_grads(cfg, None, bank, Gq, X, cand, cand_labels, own, labels)
    return queue, Gq, Gk, X, labels, bank, cfg, out


@pytest.mark.parametrize("kind", ["paco", "paco_rebalanced"])
def test_batch_path_matches_per_anchor_paco(kind):
    queue, Gq, Gk, X, labels, bank, cfg, out = _batch_fixture(kind)
    stats, d_x, d_g, d_centers, _ = out
    B = labels.shape[0]
    pcfg = PacoConfig(cfg.alpha, cfg.temperature, rebalance_centers=(kind == "paco_rebalanced"))
    ref_loss, dc_ref = [], np.zeros_like(d_centers)
    for i in range(B):
        cs = build_contrast_set(i, Gq, Gk, labels, queue)
        bd, gr = paco_loss(X[i], Gq[i], cs, bank, int(labels[i]), pcfg)
        ref_loss.append(bd.scaled_total)
        dc_ref += gr.d_centers
        assert np.allclose(d_x[i], gr.d_anchor_pre / B, atol=1e-14)
        assert np.allclose(d_g[i], gr.d_anchor_post / B, atol=1e-14)
    assert stats.loss == pytest.approx(np.mean(ref_loss), abs=1e-13)
    assert np.allclose(d_centers, dc_ref / B, atol=1e-14)


def test_batch_path_matches_per_anchor_supcon():
    queue, Gq, Gk, X, labels, bank, cfg, out = _batch_fixture("supcon")
    stats, _, d_g, _, _ = out
    B = labels.shape[0]
    ref_loss = []
    for i in range(B):
        cs = build_contrast_set(i, Gq, Gk, labels, queue)
        loss, gr = supcon_loss(Gq[i], cs, cfg.temperature)
        ref_loss.append(loss)
        assert np.allclose(d_g[i], gr.d_anchor / B, atol=1e-14)
    assert stats.loss == pytest.approx(np.mean(ref_loss), abs=1e-13)


def test_batch_path_matches_per_anchor_ce():
    queue, Gq, Gk, X, labels, bank, cfg, out = _batch_fixture("ce")
    stats, d_x, _, d_centers, _ = out
    B = labels.shape[0]
    ref_loss, dc_ref = [], np.zeros_like(d_centers)
    for i in range(B):
        loss, gr = cross_entropy_loss(X[i], bank.centers, int(labels[i]), cfg.temperature)
        ref_loss.append(loss)
        dc_ref += gr.d_weights
        assert np.allclose(d_x[i], gr.d_query / B, atol=1e-14)
    assert stats.loss == pytest.approx(np.mean(ref_loss), abs=1e-13)
    assert np.allclose(d_centers, dc_ref / B, atol=1e-14)


def test_batch_path_matches_per_anchor_multitask():
    queue, Gq, Gk, X, labels, bank, cfg, out = _batch_fixture("multitask")
    stats, d_x, d_g, d_centers, _ = out
    B = labels.shape[0]
    ref_loss = []
    for i in range(B):
        cs = build_contrast_set(i, Gq, Gk, labels, queue)
        loss, gr = multitask_loss(X[i], Gq[i], cs, bank, int(labels[i]),
                                  cfg.alpha, cfg.temperature)
        ref_loss.append(loss)
        assert np.allclose(d_x[i], gr.d_anchor_pre / B, atol=1e-14)
        assert np.allclose(d_g[i], gr.d_anchor_post / B, atol=1e-14)
    assert stats.loss == pytest.approx(np.mean(ref_loss), abs=1e-13)


# ------------------------------------------------------------- linear probe

def test_probe_on_one_hot_features():
    feats = np.eye(4)[np.repeat(np.arange(4), 25)]
    labels = np.repeat(np.arange(4), 25)
    probe = linear_probe(feats, labels, ProbeConfig(n_classes=4, epochs=30, seed=0))
    assert np.mean(probe.predict(feats) == labels) == 1.0


def test_probe_on_random_labels_is_chance():
    rng = make_rng(3)
    feats = l2_normalize_rows(rng.standard_normal((2000, 8)))
    labels = rng.integers(0, 4, 2000)
    probe = linear_probe(feats, labels, ProbeConfig(n_classes=4, epochs=20, seed=0))
    acc = np.mean(probe.predict(feats) == labels)
    sigma = np.sqrt(0.25 * 0.75 / 2000)
    assert abs(acc - 0.25) < 3 * sigma + 0.02


def test_probe_vs_nearest_center_agreement_is_reported():
    ds = tiny_dataset(seed=4, counts=(40, 40, 40), dim=8, sigma=0.2)
    cfg = TrainConfig(loss_kind="paco", epochs=20, batch_size=32, queue_capacity=64, seed=1)
    model, centers, _ = train(ds, cfg)
    x_train, _ = encode(model.query, ds.features[ds.train_idx])
    probe = linear_probe(x_train, ds.labels[ds.train_idx],
                         ProbeConfig(n_classes=3, epochs=30, seed=0))
    x_test, _ = encode(model.query, ds.features[ds.test_idx])
    agreement = np.mean(probe.predict(x_test) == classify_batch(x_test, centers))
    assert 0.0 <= agreement <= 1.0
    print(f"probe/nearest-center agreement: {agreement:.3f}")


# --------------------------------------------------------- grad-norm profile

def test_grad_norm_profile_shape_and_symmetry():
    prof = LongTailProfile(np.full(8, 60))
    ds = sample_gaussian_mixture(prof, 16, 0.35, 5, seed=9)
    cfg = TrainConfig(loss_kind="ce", epochs=0, batch_size=64, queue_capacity=64, seed=10)
    model, centers, _ = train(ds, cfg)
    norms = grad_norm_profile(model, centers, ds, cfg)
    assert norms.shape == (8,)
    assert np.all(norms > 0)
    cov = np.std(norms) / np.mean(norms)
    assert cov < 0.2


# ------------------------------------------------------- trace + checkpoint

def test_trace_csv_layout(tmp_path):
    ds = tiny_dataset(seed=3, counts=(20, 20), dim=8)
    cfg = TrainConfig(loss_kind="paco", epochs=2, batch_size=16, queue_capacity=16, seed=1)
    _, _, trace = train(ds, cfg)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:7] == ["epoch", "lr", "loss", "l_sup", "l_supcon",
                                       "l_extra", "p_sup_mean"]
    assert len(lines) == 3
    assert len(lines[1].split(",")) == 7 + 2


def test_checkpoint_roundtrip(tmp_path):
    ds = tiny_dataset(seed=3, counts=(20, 20), dim=8)
    cfg = TrainConfig(loss_kind="paco", epochs=2, batch_size=16, queue_capacity=16, seed=1)
    model, centers, _ = train(ds, cfg)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, model, centers, cfg, rng_state=make_rng(1).bit_generator.state)
    model2, centers2, cfg2, rng_state = load_checkpoint(path)
    for (_, a), (_, b) in zip(model.query.arrays(), model2.query.arrays()):
        assert np.array_equal(a, b)
    assert np.array_equal(centers.centers, centers2.centers)
    assert cfg2 == cfg
    e1, l1 = model.queue.snapshot()
    e2, l2 = model2.queue.snapshot()
    assert np.array_equal(e1, e2) and np.array_equal(l1, l2)
    assert rng_state["bit_generator"] == "Philox"
