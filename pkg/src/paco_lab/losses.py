"""Contrastive loss family with hand-derived analytic gradients.

Every loss returns (value, grads) where the gradient blocks are exact
derivatives of the returned value; the finite-difference harness in
`gradcheck` validates them. Candidate keys carry no gradient by default
(stop-gradient on the dictionary side); pass with_candidate_grads=True
to differentiate through them as well.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .numerics import as_vector, log_softmax, logsumexp
from .queue import ContrastSet


@dataclass
class CenterBank:
    """Learnable class centers plus the class-frequency vector of the training set."""

    centers: np.ndarray     # (n_classes, dim)
    class_freq: np.ndarray  # (n_classes,), positive, sums to 1

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        self.class_freq = np.asarray(self.class_freq, dtype=np.float64)
        if self.centers.shape[0] < 2:
            raise ContractViolation("need at least 2 classes")
        if self.class_freq.shape[0] != self.centers.shape[0]:
            raise ContractViolation("class_freq length must match number of centers")
        if np.any(self.class_freq <= 0):
            raise ContractViolation("class frequencies must be positive")
        if abs(float(np.sum(self.class_freq)) - 1.0) > 1e-9:
            raise ContractViolation("class frequencies must sum to 1")

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def copy(self) -> "CenterBank":
        return CenterBank(self.centers.copy(), self.class_freq.copy())


@dataclass(frozen=True)
class PacoConfig:
    alpha: float
    temperature: float
    rebalance_centers: bool = False

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ContractViolation(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.temperature <= 0:
            raise ContractViolation(f"temperature must be positive, got {self.temperature}")


@dataclass
class LossBreakdown:
    """Multi-task view of one loss evaluation.

    `total` is the unscaled value; `scaled_total` divides by the positive
    weight 1 + alpha*|P|. p_sup/p_supcon split the shared softmax mass
    between center terms and sample terms.
    """

    total: float
    scaled_total: float
    l_sup: float
    l_supcon: float
    l_extra: float
    p_sup: float
    p_supcon: float
    boundary: bool = False


@dataclass
class LossGrads:
    d_anchor_pre: np.ndarray    # w.r.t. the embedding feeding the identity path
    d_anchor_post: np.ndarray   # w.r.t. the MLP-head output
    d_centers: np.ndarray       # same shape as the center bank
    d_candidates: np.ndarray    # per-candidate; zeros unless candidate grads requested


@dataclass
class InfoNceGrads:
    d_query: np.ndarray
    d_positive: np.ndarray
    d_negatives: np.ndarray


@dataclass
class CrossEntropyGrads:
    d_query: np.ndarray
    d_weights: np.ndarray


@dataclass
class SupconGrads:
    d_anchor: np.ndarray
    d_candidates: np.ndarray


def infonce_loss(query, positive, negatives, temperature: float):
    """One-positive contrastive loss: softmax cross-entropy with the positive at slot 0."""
    q = as_vector(query)
    pos = as_vector(positive)
    negs = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if negs.size == 0:
        raise ContractViolation("infonce requires at least one negative key")
    if temperature <= 0:
        raise ContractViolation("temperature must be positive")
    keys = np.concatenate([pos[None, :], negs], axis=0)
    logits = keys @ q / temperature
    logp = log_softmax(logits)
    loss = float(-logp[0])
    p = np.exp(logp)
    coeff = p.copy()
    coeff[0] -= 1.0
    d_query = (coeff @ keys) / temperature
    d_keys = np.outer(coeff, q) / temperature
    return loss, InfoNceGrads(d_query, d_keys[0], d_keys[1:])


def cross_entropy_loss(query, weights, label: int, temperature: float):
    """Plain temperature-scaled softmax cross-entropy against a weight matrix."""
    q = as_vector(query)
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if not (0 <= label < w.shape[0]):
        raise ContractViolation(f"label {label} out of range for {w.shape[0]} classes")
    if temperature <= 0:
        raise ContractViolation("temperature must be positive")
    logits = w @ q / temperature
    logp = log_softmax(logits)
    loss = float(-logp[label])
    coeff = np.exp(logp)
    coeff[label] -= 1.0
    d_query = (coeff @ w) / temperature
    d_weights = np.outer(coeff, q) / temperature
    return loss, CrossEntropyGrads(d_query, d_weights)


def supcon_loss(anchor_post, contrast: ContrastSet, temperature: float,
                with_candidate_grads: bool = False):
    """Supervised contrastive loss over the candidate set, scaled by 1/|P|.

    An empty positive set contributes zero loss and zero gradient.
    """
    g = as_vector(anchor_post)
    if len(contrast) == 0:
        raise ContractViolation("supcon needs a nonempty candidate set")
    if temperature <= 0:
        raise ContractViolation("temperature must be positive")
    z = contrast.candidates
    pos = contrast.positive_mask
    npos = contrast.n_positives
    if npos == 0:
        return 0.0, SupconGrads(np.zeros_like(g), np.zeros_like(z))
    s = z @ g / temperature
    lse = logsumexp(s)
    loss = float(-(np.sum(s[pos]) - npos * lse) / npos)
    p = np.exp(s - lse)
    coeff = p - pos.astype(np.float64) / npos
    d_anchor = (coeff @ z) / temperature
    d_candidates = (np.outer(coeff, g) / temperature) if with_candidate_grads else np.zeros_like(z)
    return loss, SupconGrads(d_anchor, d_candidates)


def _paco_logits(anchor_pre, anchor_post, contrast: ContrastSet, bank: CenterBank,
                 cfg: PacoConfig):
    """Sample logits z.G(x)/tau and center logits c.F(x)/tau (plus log-prior when rebalanced)."""
    x = as_vector(anchor_pre)
    g = as_vector(anchor_post)
    if x.shape[0] != bank.dim:
        raise ContractViolation("anchor_pre dim does not match centers")
    m = len(contrast)
    s = contrast.candidates @ g / cfg.temperature if m else np.zeros(0)
    t = bank.centers @ x / cfg.temperature
    if cfg.rebalance_centers:
        t = t + np.log(bank.class_freq)
    return x, g, s, t


def _breakdown(s, t, label, alpha, npos, pos_mask) -> LossBreakdown:
    w_total = 1.0 + alpha * npos
    all_logits = np.concatenate([s, t])
    log_denom = logsumexp(all_logits)
    unscaled = -(t[label] - log_denom)
    if npos:
        unscaled -= alpha * float(np.sum(s[pos_mask]) - npos * log_denom)
    p_sup = float(np.sum(np.exp(t - log_denom)))
    p_supcon = float(np.sum(np.exp(s - log_denom))) if s.size else 0.0
    l_sup = float(-(t[label] - logsumexp(t)))
    l_supcon = float(-(np.sum(s[pos_mask]) - npos * logsumexp(s))) if npos else 0.0
    boundary = p_sup <= 0.0 or p_sup >= 1.0
    if p_sup <= 0.0:
        l_extra = np.inf
    else:
        l_extra = -np.log(p_sup)
        if npos:
            l_extra += -alpha * npos * np.log(p_supcon) if p_supcon > 0.0 else np.inf
    return LossBreakdown(
        total=float(unscaled),
        scaled_total=float(unscaled / w_total),
        l_sup=l_sup,
        l_supcon=l_supcon,
        l_extra=float(l_extra),
        p_sup=p_sup,
        p_supcon=p_supcon,
        boundary=bool(boundary),
    )


def paco_loss(anchor_pre, anchor_post, contrast: ContrastSet, bank: CenterBank,
              label: int, cfg: PacoConfig, with_candidate_grads: bool = False):
    """Center-augmented contrastive loss with the shared denominator over candidates and centers.

    Positives are weighted alpha, the own center 1.0, and the loss is scaled by
    1/(1 + alpha*|P|). Gradients correspond to the scaled loss; multiply by
    (1 + alpha*|P|) to recover unscaled gradients.
    """
    if not (0 <= label < bank.n_classes):
        raise ContractViolation(f"label {label} out of range for {bank.n_classes} classes")
    x, g, s, t = _paco_logits(anchor_pre, anchor_post, contrast, bank, cfg)
    pos = contrast.positive_mask
    npos = contrast.n_positives
    breakdown = _breakdown(s, t, label, cfg.alpha, npos, pos)

    w_total = 1.0 + cfg.alpha * npos
    all_logits = np.concatenate([s, t])
    log_denom = logsumexp(all_logits)
    p = np.exp(s - log_denom) if s.size else np.zeros(0)
    r = np.exp(t - log_denom)

    # d(scaled loss)/d(logit): samples (W*p_k - alpha*1[pos]) / W, centers (W*r_j - 1[j=y]) / W
    ds = (w_total * p - cfg.alpha * pos.astype(np.float64)) / (w_total * cfg.temperature) if s.size else p
    dt = w_total * r
    dt[label] -= 1.0
    dt /= w_total * cfg.temperature

    d_anchor_post = ds @ contrast.candidates if s.size else np.zeros_like(g)
    d_anchor_pre = dt @ bank.centers
    d_centers = np.outer(dt, x)
    d_candidates = (
        np.outer(ds, g) if (with_candidate_grads and s.size) else np.zeros_like(contrast.candidates)
    )
    grads = LossGrads(d_anchor_pre, d_anchor_post, d_centers, d_candidates)
    return breakdown, grads


def decompose_paco(anchor_pre, anchor_post, contrast: ContrastSet, bank: CenterBank,
                   label: int, cfg: PacoConfig) -> LossBreakdown:
    """Multi-task decomposition of the unscaled loss; requires rebalancing off.

    Satisfies total = l_sup + alpha*l_supcon + l_extra with |P| in place of
    the expected positive count.
    """
    if cfg.rebalance_centers:
        raise ContractViolation("decomposition is defined for the unrebalanced loss")
    if not (0 <= label < bank.n_classes):
        raise ContractViolation(f"label {label} out of range for {bank.n_classes} classes")
    _, _, s, t = _paco_logits(anchor_pre, anchor_post, contrast, bank, cfg)
    return _breakdown(s, t, label, cfg.alpha, contrast.n_positives, contrast.positive_mask)


def multitask_loss(anchor_pre, anchor_post, contrast: ContrastSet, bank: CenterBank,
                   label: int, lam: float, temperature: float,
                   with_candidate_grads: bool = False):
    """Fixed-weight sum of center cross-entropy and supervised contrastive loss.

    The two terms keep separate softmax denominators (centers-only and
    candidates-only), unlike the shared denominator of paco_loss.
    """
    if lam < 0:
        raise ContractViolation(f"multitask weight must be nonnegative, got {lam}")
    ce, ce_grads = cross_entropy_loss(anchor_pre, bank.centers, label, temperature)
    g = as_vector(anchor_post)
    if len(contrast) > 0:
        sc, sc_grads = supcon_loss(anchor_post, contrast, temperature, with_candidate_grads)
    else:
        sc = 0.0
        sc_grads = SupconGrads(np.zeros_like(g), np.zeros_like(contrast.candidates))
    loss = ce + lam * sc
    grads = LossGrads(
        d_anchor_pre=ce_grads.d_query,
        d_anchor_post=lam * sc_grads.d_anchor,
        d_centers=ce_grads.d_weights,
        d_candidates=lam * sc_grads.d_candidates,
    )
    return loss, grads
