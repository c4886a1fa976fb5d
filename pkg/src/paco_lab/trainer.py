"""Desk-scale training loop with hand-written backpropagation.

The encoder is a linear map followed by row normalization; the head G is a
two-layer relu MLP, also normalized. A momentum copy of both feeds the key
queue. Per-step loss/gradient math is vectorized over the batch but is
anchored to the per-sample loss functions in `losses` (the test suite checks
the two routes agree).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, TrainingDiverged
from .losses import CenterBank
from .numerics import Schedule, cosine_lr, l2_normalize_rows, make_rng
from .data import SyntheticDataset, class_frequency
from .queue import EncoderParams, MomentumQueue, enqueue_batch, momentum_update

LOSS_KINDS = ("ce", "supcon", "paco", "paco_rebalanced", "multitask")

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "paco"
    alpha: float = 0.05           # positive weight; doubles as the multitask weight
    temperature: float = 0.2
    queue_capacity: int = 256     # desk-proportionate dictionary; full-scale runs used 8192
    momentum_m: float = 0.99      # key-network momentum
    sgd_momentum: float = 0.9
    base_lr: float = 0.08         # 0.02 transfers poorly to the toy encoder; see README
    epochs: int = 150
    batch_size: int = 128
    seed: int = 0
    embed_dim: int = 0            # 0 -> same as the data dimension
    view_sigma: float = 0.0       # 0 -> reuse the dataset's noise level

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ContractViolation(f"unknown loss_kind {self.loss_kind!r}")
        for name in ("temperature", "base_lr", "batch_size", "queue_capacity"):
            if getattr(self, name) <= 0:
                raise ContractViolation(f"{name} must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ContractViolation("alpha must lie in (0, 1)")
        if not (0.0 <= self.momentum_m <= 1.0):
            raise ContractViolation("momentum_m must lie in [0, 1]")
        if not (0.0 <= self.sgd_momentum < 1.0):
            raise ContractViolation("sgd_momentum must lie in [0, 1)")
        if self.epochs < 0:
            raise ContractViolation("epochs must be nonnegative")

    @classmethod
    def cifar_lt_preset(cls, **overrides) -> "TrainConfig":
        """Smaller-constant regime: temperature 0.05, alpha 0.02."""
        base = dict(temperature=0.05, alpha=0.02)
        base.update(overrides)
        return cls(**base)


@dataclass
class TrainedModel:
    query: EncoderParams
    key: EncoderParams
    queue: MomentumQueue
    input_dim: int
    embed_dim: int


@dataclass
class TrainTrace:
    """One record per epoch; arrays are aligned on the epoch axis."""

    epoch: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    lr: np.ndarray = field(default_factory=lambda: np.zeros(0))
    loss: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l_sup: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l_supcon: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l_extra: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p_sup_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grad_norms: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    mean_positive_count: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return self.epoch.size

    def equals(self, other: "TrainTrace") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("epoch", "lr", "loss", "l_sup", "l_supcon", "l_extra",
                      "p_sup_mean", "grad_norms", "mean_positive_count")
        )


def write_trace_csv(trace: TrainTrace, path) -> None:
    n_classes = trace.grad_norms.shape[1] if trace.grad_norms.size else 0
    cols = ["epoch", "lr", "loss", "l_sup", "l_supcon", "l_extra", "p_sup_mean"]
    cols += [f"gradnorm_c{c}" for c in range(n_classes)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for e in range(len(trace)):
            row = [str(int(trace.epoch[e]))]
            row += [repr(float(v)) for v in (trace.lr[e], trace.loss[e], trace.l_sup[e],
                                             trace.l_supcon[e], trace.l_extra[e],
                                             trace.p_sup_mean[e])]
            row += [repr(float(v)) for v in trace.grad_norms[e]]
            fh.write(",".join(row) + "\n")


def sgd_momentum_step(params: np.ndarray, grads: np.ndarray, velocity: np.ndarray,
                      lr: float, mu: float):
    """Classical momentum: v' = mu*v + g; p' = p - lr*v'."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    if params.shape != grads.shape or params.shape != velocity.shape:
        raise ContractViolation("params/grads/velocity shapes must match")
    v_new = mu * velocity + grads
    return params - lr * v_new, v_new


def init_encoder(input_dim: int, embed_dim: int, rng: np.random.Generator) -> EncoderParams:
    """Uniform(-1, 1)/sqrt(fan_in) weights, zero biases."""
    return EncoderParams(
        encoder=rng.uniform(-1.0, 1.0, (input_dim, embed_dim)) / np.sqrt(input_dim),
        mlp_w1=rng.uniform(-1.0, 1.0, (embed_dim, embed_dim)) / np.sqrt(embed_dim),
        mlp_b1=np.zeros(embed_dim),
        mlp_w2=rng.uniform(-1.0, 1.0, (embed_dim, embed_dim)) / np.sqrt(embed_dim),
        mlp_b2=np.zeros(embed_dim),
    )


def encode(params: EncoderParams, inputs: np.ndarray):
    """Linear map + row normalization; returns (X, pre-norm cache)."""
    h = np.atleast_2d(inputs) @ params.encoder
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    return h / norms, (h, norms)


_LEAKY_SLOPE = 0.1  # keeps head outputs off the exact zero vector so normalization stays defined


def head(params: EncoderParams, x: np.ndarray):
    """Two-layer leaky-relu MLP + row normalization; returns (G, caches)."""
    a1 = x @ params.mlp_w1 + params.mlp_b1
    r = np.where(a1 > 0, a1, _LEAKY_SLOPE * a1)
    a2 = r @ params.mlp_w2 + params.mlp_b2
    norms = np.linalg.norm(a2, axis=1, keepdims=True)
    return a2 / norms, (a1, r, a2, norms)


def _backprop_normalize(d_out: np.ndarray, out: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # y = v/|v|  =>  dv = (dy - y*(y.dy)) / |v|
    return (d_out - out * np.sum(out * d_out, axis=1, keepdims=True)) / norms


def _backprop(params: EncoderParams, inputs, x, enc_cache, head_cache,
              d_x_direct, d_g) -> dict:
    """Gradients of all query-side parameters given dL/dX (identity path) and dL/dG."""
    grads = {}
    if head_cache is not None and d_g is not None:
        a1, r, a2, norms2 = head_cache
        d_a2 = _backprop_normalize(d_g, a2 / norms2, norms2)
        grads["mlp_b2"] = d_a2.sum(axis=0)
        grads["mlp_w2"] = r.T @ d_a2
        d_r = d_a2 @ params.mlp_w2.T
        d_a1 = d_r * np.where(a1 > 0, 1.0, _LEAKY_SLOPE)
        grads["mlp_b1"] = d_a1.sum(axis=0)
        grads["mlp_w1"] = x.T @ d_a1
        d_x = d_x_direct + d_a1 @ params.mlp_w1.T
    else:
        grads["mlp_b2"] = np.zeros_like(params.mlp_b2)
        grads["mlp_w2"] = np.zeros_like(params.mlp_w2)
        grads["mlp_b1"] = np.zeros_like(params.mlp_b1)
        grads["mlp_w1"] = np.zeros_like(params.mlp_w1)
        d_x = d_x_direct
    h, norms1 = enc_cache
    d_h = _backprop_normalize(d_x, h / norms1, norms1)
    grads["encoder"] = np.atleast_2d(inputs).T @ d_h
    return grads


@dataclass
class BatchStats:
    loss: float
    l_sup: float
    l_supcon: float
    l_extra: float
    p_sup: float
    mean_positives: float
    center_grad_norms: np.ndarray  # per-class diagnostic
    p_supcon: float = 0.0


def _row_logsumexp(mat: np.ndarray) -> np.ndarray:
    m = np.max(mat, axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(mat - m), axis=1, keepdims=True)))[:, 0]


def batch_loss_and_grads(cfg: TrainConfig, query: EncoderParams, centers: CenterBank,
                         g_query: np.ndarray, x_query: np.ndarray,
                         cand_embs: np.ndarray, cand_labels: np.ndarray,
                         own_v1_cols: np.ndarray, labels: np.ndarray):
    """Vectorized loss + input-side gradients for one batch.

    `cand_embs` holds queue keys then batch v1 then batch v2; `own_v1_cols[i]`
    is the column of anchor i's first view, excluded from its candidate set
    (set below -1 to disable exclusion, e.g. when candidates are queue-only).
    Candidate keys are stop-gradient. Returns (stats, d_x, d_g, d_centers,
    class attribution matrix used for the supcon diagnostic).
    """
    b = labels.shape[0]
    n = centers.n_classes
    tau = cfg.temperature
    onehot = np.zeros((b, n))
    onehot[np.arange(b), labels] = 1.0

    t_logits = x_query @ centers.centers.T / tau
    if cfg.loss_kind == "paco_rebalanced":
        t_logits = t_logits + np.log(centers.class_freq)[None, :]

    if cfg.loss_kind == "ce":
        logp = t_logits - _row_logsumexp(t_logits)[:, None]
        losses = -logp[np.arange(b), labels]
        dt = (np.exp(logp) - onehot) / (tau * b)
        d_x = dt @ centers.centers
        d_centers = dt.T @ x_query
        stats = BatchStats(float(losses.mean()), float(losses.mean()), 0.0, 0.0, 1.0,
                           0.0, np.linalg.norm(d_centers, axis=1))
        return stats, d_x, None, d_centers, None

    m = cand_embs.shape[0]
    s_logits = g_query @ cand_embs.T / tau
    exclude = np.zeros((b, m), dtype=bool)
    has_own = own_v1_cols >= 0
    exclude[np.arange(b)[has_own], own_v1_cols[has_own]] = True
    pos = (cand_labels[None, :] == labels[:, None]) & ~exclude
    npos = pos.sum(axis=1)
    s_masked = np.where(exclude, -np.inf, s_logits)

    if cfg.loss_kind in ("supcon", "multitask"):
        lse_s = _row_logsumexp(s_masked)
        np_safe = np.maximum(npos, 1)
        sc_losses = -(np.sum(np.where(pos, s_logits, 0.0), axis=1) - npos * lse_s) / np_safe
        sc_losses = np.where(npos > 0, sc_losses, 0.0)
        p_s = np.exp(s_masked - lse_s[:, None])
        ds = (p_s - pos / np_safe[:, None]) / tau
        ds[npos == 0] = 0.0
        ds /= b
        d_g = ds @ cand_embs
        # per-class attribution of the would-be candidate gradients
        attr = ds.T @ g_query  # (m, embed)
        class_attr = np.zeros((n, g_query.shape[1]))
        np.add.at(class_attr, cand_labels, attr)

        if cfg.loss_kind == "supcon":
            # diagnostic-only p_sup: no centers in the denominator
            stats = BatchStats(float(sc_losses.mean()), 0.0, float(sc_losses.mean()), 0.0,
                               0.0, float(npos.mean()), np.linalg.norm(class_attr, axis=1))
            return stats, np.zeros_like(x_query), d_g, np.zeros_like(centers.centers), class_attr

        # multitask: add the center cross-entropy with its own denominator
        logp = t_logits - _row_logsumexp(t_logits)[:, None]
        ce_losses = -logp[np.arange(b), labels]
        dt = (np.exp(logp) - onehot) / (tau * b)
        d_x = dt @ centers.centers
        d_centers = dt.T @ x_query
        lam = cfg.alpha
        total = ce_losses + lam * sc_losses
        # shared-denominator mass split, reported as a diagnostic only
        denom_all = np.logaddexp(_row_logsumexp(t_logits), lse_s)
        p_sup = float(np.mean(np.exp(_row_logsumexp(t_logits) - denom_all)))
        stats = BatchStats(float(total.mean()), float(ce_losses.mean()), float(sc_losses.mean()),
                           0.0, p_sup, float(npos.mean()), np.linalg.norm(d_centers, axis=1))
        return stats, d_x, lam * d_g, d_centers, class_attr

    # paco / paco_rebalanced: shared denominator over candidates and centers
    all_logits = np.concatenate([s_masked, t_logits], axis=1)
    log_denom = _row_logsumexp(all_logits)
    w_total = 1.0 + cfg.alpha * npos
    t_y = t_logits[np.arange(b), labels]
    unscaled = -(t_y - log_denom) - cfg.alpha * (
        np.sum(np.where(pos, s_logits, 0.0), axis=1) - npos * log_denom
    )
    scaled = unscaled / w_total

    p = np.exp(s_masked - log_denom[:, None])
    r = np.exp(t_logits - log_denom[:, None])
    ds = (w_total[:, None] * p - cfg.alpha * pos) / (w_total[:, None] * tau * b)
    dt = (w_total[:, None] * r - onehot) / (w_total[:, None] * tau * b)
    d_g = ds @ cand_embs
    d_x = dt @ centers.centers
    d_centers = dt.T @ x_query

    p_sup_rows = r.sum(axis=1)
    p_supcon_rows = p.sum(axis=1)
    l_sup_rows = -(t_y - _row_logsumexp(t_logits))
    lse_s = _row_logsumexp(s_masked)
    l_supcon_rows = np.where(
        npos > 0,
        -(np.sum(np.where(pos, s_logits, 0.0), axis=1) - npos * lse_s),
        0.0,
    )
    with np.errstate(divide="ignore"):
        l_extra_rows = -np.log(p_sup_rows) - cfg.alpha * npos * np.where(
            npos > 0, np.log(np.maximum(p_supcon_rows, 1e-300)), 0.0
        )
    stats = BatchStats(
        float(scaled.mean()), float(l_sup_rows.mean()), float(l_supcon_rows.mean()),
        float(l_extra_rows.mean()), float(p_sup_rows.mean()), float(npos.mean()),
        np.linalg.norm(d_centers, axis=1), p_supcon=float(p_supcon_rows.mean()),
    )
    return stats, d_x, d_g, d_centers, None


def _resolve_dims(dataset: SyntheticDataset, cfg: TrainConfig) -> tuple[int, int, float]:
    embed_dim = cfg.embed_dim if cfg.embed_dim > 0 else dataset.dim
    sigma = cfg.view_sigma if cfg.view_sigma > 0 else dataset.noise_sigma
    return dataset.dim, embed_dim, sigma


def _make_views(feats: np.ndarray, sigma: float, rng: np.random.Generator):
    v1 = l2_normalize_rows(feats + sigma * rng.standard_normal(feats.shape))
    v2 = l2_normalize_rows(feats + sigma * rng.standard_normal(feats.shape))
    return v1, v2


def train(dataset: SyntheticDataset, cfg: TrainConfig):
    """Run the training loop; returns (TrainedModel, CenterBank, TrainTrace).

    Bit-deterministic for a fixed (dataset, config): the Philox stream is
    consumed in a fixed order and all reductions are fixed-order.
    """
    if dataset.n_train == 0:
        raise ContractViolation("dataset has no training samples")
    input_dim, embed_dim, view_sigma = _resolve_dims(dataset, cfg)
    rng = make_rng(cfg.seed)

    query = init_encoder(input_dim, embed_dim, rng)
    key = query.copy()
    centers = CenterBank(
        l2_normalize_rows(rng.standard_normal((dataset.profile.n_classes, embed_dim))) * 0.1,
        class_frequency(dataset.profile),
    )
    queue = MomentumQueue(cfg.queue_capacity, embed_dim)
    velocities = {name: np.zeros_like(arr) for name, arr in query.arrays()}
    velocities["centers"] = np.zeros_like(centers.centers)

    train_feats = dataset.features[dataset.train_idx]
    train_labels = dataset.labels[dataset.train_idx]
    n_train = train_feats.shape[0]
    batches_per_epoch = max(1, -(-n_train // cfg.batch_size))
    schedule = Schedule(cfg.base_lr, max(1, cfg.epochs * batches_per_epoch))

    trace_rows = []
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_train)
        epoch_stats = []
        epoch_lr = cosine_lr(step, schedule)
        for start in range(0, n_train, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            feats, labels = train_feats[idx], train_labels[idx]
            u1, u2 = _make_views(feats, view_sigma, rng)

            x_query, enc_cache = encode(query, u1)
            g_query, head_cache = head(query, x_query)
            x_key, _ = encode(key, u2)
            g_key, _ = head(key, x_key)

            q_embs, q_labels = queue.snapshot()
            cand_embs = np.concatenate([q_embs, g_query, g_key], axis=0)
            cand_labels = np.concatenate([q_labels, labels, labels])
            own_cols = len(q_labels) + np.arange(labels.shape[0])

            stats, d_x, d_g, d_centers, _ = batch_loss_and_grads(
                cfg, query, centers, g_query, x_query, cand_embs, cand_labels,
                own_cols, labels)
            if not np.isfinite(stats.loss):
                raise TrainingDiverged(step, epoch)

            param_grads = _backprop(query, u1, x_query, enc_cache,
                                    head_cache if d_g is not None else None,
                                    d_x, d_g)
            lr = cosine_lr(step, schedule)
            updates = dict(query.arrays())
            for name in updates:
                updates[name], velocities[name] = sgd_momentum_step(
                    updates[name], param_grads[name], velocities[name], lr, cfg.sgd_momentum)
            query = EncoderParams(**updates)
            new_centers, velocities["centers"] = sgd_momentum_step(
                centers.centers, d_centers, velocities["centers"], lr, cfg.sgd_momentum)
            centers = CenterBank(new_centers, centers.class_freq)

            key = momentum_update(key, query, cfg.momentum_m)
            enqueue_batch(queue, g_key, labels)
            epoch_stats.append(stats)
            step += 1
        trace_rows.append((epoch, epoch_lr, epoch_stats))

    trace = _assemble_trace(trace_rows, dataset.profile.n_classes)
    model = TrainedModel(query, key, queue, input_dim, embed_dim)
    return model, centers, trace


def _assemble_trace(rows, n_classes: int) -> TrainTrace:
    if not rows:
        return TrainTrace(grad_norms=np.zeros((0, n_classes)))
    n = len(rows)
    trace = TrainTrace(
        epoch=np.array([r[0] for r in rows], dtype=np.int64),
        lr=np.array([r[1] for r in rows]),
        loss=np.zeros(n), l_sup=np.zeros(n), l_supcon=np.zeros(n),
        l_extra=np.zeros(n), p_sup_mean=np.zeros(n),
        grad_norms=np.zeros((n, n_classes)),
        mean_positive_count=np.zeros(n),
    )
    for e, (_, _, stats) in enumerate(rows):
        trace.loss[e] = np.mean([s.loss for s in stats])
        trace.l_sup[e] = np.mean([s.l_sup for s in stats])
        trace.l_supcon[e] = np.mean([s.l_supcon for s in stats])
        trace.l_extra[e] = np.mean([s.l_extra for s in stats])
        trace.p_sup_mean[e] = np.mean([s.p_sup for s in stats])
        trace.grad_norms[e] = np.mean([s.center_grad_norms for s in stats], axis=0)
        trace.mean_positive_count[e] = np.mean([s.mean_positives for s in stats])
    return trace


def grad_norm_profile(model: TrainedModel, centers: CenterBank, dataset: SyntheticDataset,
                      cfg: TrainConfig, seed: int | None = None) -> np.ndarray:
    """Per-class gradient-norm diagnostic over one full pass, no parameter updates.

    For center-bearing losses this is the L2 norm of each center row's batch
    gradient (averaged over batches); for supcon it is the norm of the
    per-class aggregated candidate gradients. Classes are already ordered by
    training count (head first).
    """
    _, _, view_sigma = _resolve_dims(dataset, cfg)
    rng = make_rng(cfg.seed if seed is None else seed)
    feats = dataset.features[dataset.train_idx]
    labels = dataset.labels[dataset.train_idx]
    q_embs, q_labels = model.queue.snapshot()
    norms_acc = np.zeros(centers.n_classes)
    n_batches = 0
    for start in range(0, feats.shape[0], cfg.batch_size):
        f, lab = feats[start:start + cfg.batch_size], labels[start:start + cfg.batch_size]
        u1, u2 = _make_views(f, view_sigma, rng)
        x_query, _ = encode(model.query, u1)
        g_query, _ = head(model.query, x_query)
        x_key, _ = encode(model.key, u2)
        g_key, _ = head(model.key, x_key)
        cand_embs = np.concatenate([q_embs, g_query, g_key], axis=0)
        cand_labels = np.concatenate([q_labels, lab, lab])
        own_cols = len(q_labels) + np.arange(lab.shape[0])
        stats, *_ = batch_loss_and_grads(cfg, model.query, centers, g_query, x_query,
                                         cand_embs, cand_labels, own_cols, lab)
        norms_acc += stats.center_grad_norms
        n_batches += 1
    return norms_acc / n_batches


@dataclass
class LinearProbe:
    weights: np.ndarray  # (n_classes, dim)
    bias: np.ndarray     # (n_classes,)

    def predict(self, features: np.ndarray) -> np.ndarray:
        logits = np.atleast_2d(features) @ self.weights.T + self.bias
        return np.argmax(logits, axis=1)


@dataclass(frozen=True)
class ProbeConfig:
    n_classes: int
    epochs: int = 100
    lr: float = 1.0
    batch_size: int = 128
    momentum: float = 0.9
    seed: int = 0


def linear_probe(frozen_embeddings: np.ndarray, labels: np.ndarray,
                 probe_config: ProbeConfig) -> LinearProbe:
    """Cross-entropy training of a linear classifier on fixed features."""
    feats = np.atleast_2d(np.asarray(frozen_embeddings, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    n, dim = feats.shape
    k = probe_config.n_classes
    rng = make_rng(probe_config.seed)
    w = np.zeros((k, dim))
    bias = np.zeros(k)
    vel_w = np.zeros_like(w)
    vel_b = np.zeros_like(bias)
    total_steps = max(1, probe_config.epochs * max(1, -(-n // probe_config.batch_size)))
    schedule = Schedule(probe_config.lr, total_steps)
    step = 0
    for _ in range(probe_config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, probe_config.batch_size):
            idx = perm[start:start + probe_config.batch_size]
            f, y = feats[idx], labels[idx]
            b = f.shape[0]
            logits = f @ w.T + bias
            logits -= np.max(logits, axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(b), y] -= 1.0
            gw = p.T @ f / b
            gb = p.sum(axis=0) / b
            lr = cosine_lr(step, schedule)
            w, vel_w = sgd_momentum_step(w, gw, vel_w, lr, probe_config.momentum)
            bias, vel_b = sgd_momentum_step(bias, gb, vel_b, lr, probe_config.momentum)
            step += 1
    return LinearProbe(w, bias)


def _rng_state_to_jsonable(state):
    if isinstance(state, dict):
        return {k: _rng_state_to_jsonable(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return state.tolist()
    if isinstance(state, (np.integer,)):
        return int(state)
    return state


def save_checkpoint(path, model: TrainedModel, centers: CenterBank, cfg: TrainConfig,
                    rng_state=None) -> None:
    """Versioned JSON dump: query params, key params, centers, queue, RNG state."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "input_dim": model.input_dim,
        "embed_dim": model.embed_dim,
        "query": {name: arr.tolist() for name, arr in model.query.arrays()},
        "key": {name: arr.tolist() for name, arr in model.key.arrays()},
        "centers": centers.centers.tolist(),
        "class_freq": centers.class_freq.tolist(),
        "queue": model.queue.to_dict(),
        "config": {
            "loss_kind": cfg.loss_kind, "alpha": cfg.alpha, "temperature": cfg.temperature,
            "queue_capacity": cfg.queue_capacity, "momentum_m": cfg.momentum_m,
            "sgd_momentum": cfg.sgd_momentum, "base_lr": cfg.base_lr, "epochs": cfg.epochs,
            "batch_size": cfg.batch_size, "seed": cfg.seed, "embed_dim": cfg.embed_dim,
            "view_sigma": cfg.view_sigma,
        },
        "rng_state": _rng_state_to_jsonable(rng_state) if rng_state is not None else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ContractViolation(f"unsupported checkpoint version {payload.get('version')}")
    query = EncoderParams(**{k: np.asarray(v, dtype=np.float64) for k, v in payload["query"].items()})
    key = EncoderParams(**{k: np.asarray(v, dtype=np.float64) for k, v in payload["key"].items()})
    queue = MomentumQueue.from_dict(payload["queue"])
    model = TrainedModel(query, key, queue, int(payload["input_dim"]), int(payload["embed_dim"]))
    centers = CenterBank(np.asarray(payload["centers"], dtype=np.float64),
                         np.asarray(payload["class_freq"], dtype=np.float64))
    cfg = TrainConfig(**payload["config"])
    return model, centers, cfg, payload.get("rng_state")
