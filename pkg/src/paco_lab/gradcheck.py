"""Finite-difference validation of every analytic gradient.

Each instance is generated from its own integer seed so a failing case can
be replayed exactly from the dumped (kind, seed) pair.
"""
from __future__ import annotations

from dataclasses import dataclass
from statistics import median

import numpy as np

from .errors import ContractViolation
from .losses import (CenterBank, PacoConfig, cross_entropy_loss, infonce_loss,
                     multitask_loss, paco_loss, supcon_loss)
from .numerics import l2_normalize, l2_normalize_rows, make_rng
from .queue import ContrastSet

KINDS = ("infonce", "cross_entropy", "supcon", "paco", "multitask")

FD_STEP = 1e-6


def numeric_gradient(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences, one component at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f(x)
        flat[i] = orig - step
        f_minus = f(x)
        flat[i] = orig
        g[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-3)
    return float(np.linalg.norm(a - n)) / denom


def _random_contrast(rng: np.random.Generator, dim: int, n_classes: int,
                     n_candidates: int, anchor_label: int) -> ContrastSet:
    embs = l2_normalize_rows(rng.standard_normal((n_candidates, dim)))
    labels = rng.integers(0, n_classes, n_candidates)
    return ContrastSet(0, anchor_label, embs, labels)


@dataclass
class InstanceResult:
    kind: str
    seed: int
    max_rel_err: float
    block_errors: dict


def check_instance(kind: str, seed: int, step: float = FD_STEP) -> InstanceResult:
    """Build one random instance of the given loss and compare every gradient
    block against central differences."""
    if kind not in KINDS:
        raise ContractViolation(f"unknown loss kind {kind!r}")
    rng = make_rng(seed)
    dim = int(rng.integers(2, 17))
    n_classes = int(rng.integers(2, 11))
    n_cand = int(rng.integers(1, 33))
    tau = float(rng.uniform(0.1, 1.0))
    errors: dict[str, float] = {}

    if kind == "infonce":
        q = l2_normalize(rng.standard_normal(dim))
        pos = l2_normalize(rng.standard_normal(dim))
        negs = l2_normalize_rows(rng.standard_normal((n_cand, dim)))
        _, grads = infonce_loss(q, pos, negs, tau)
        loss_of = lambda qq, pp, nn: infonce_loss(qq, pp, nn, tau)[0]
        errors["d_query"] = relative_error(
            grads.d_query, numeric_gradient(lambda v: loss_of(v, pos, negs), q.copy(), step))
        errors["d_positive"] = relative_error(
            grads.d_positive, numeric_gradient(lambda v: loss_of(q, v, negs), pos.copy(), step))
        errors["d_negatives"] = relative_error(
            grads.d_negatives, numeric_gradient(lambda v: loss_of(q, pos, v), negs.copy(), step))

    elif kind == "cross_entropy":
        q = l2_normalize(rng.standard_normal(dim))
        w = 0.5 * rng.standard_normal((n_classes, dim))
        label = int(rng.integers(0, n_classes))
        _, grads = cross_entropy_loss(q, w, label, tau)
        errors["d_query"] = relative_error(
            grads.d_query,
            numeric_gradient(lambda v: cross_entropy_loss(v, w, label, tau)[0], q.copy(), step))
        errors["d_weights"] = relative_error(
            grads.d_weights,
            numeric_gradient(lambda v: cross_entropy_loss(q, v, label, tau)[0], w.copy(), step))

    elif kind == "supcon":
        anchor_label = int(rng.integers(0, n_classes))
        contrast = _random_contrast(rng, dim, n_classes, n_cand, anchor_label)
        g = l2_normalize(rng.standard_normal(dim))
        _, grads = supcon_loss(g, contrast, tau, with_candidate_grads=True)

        def sc(gv, cv):
            cs = ContrastSet(0, anchor_label, cv, contrast.candidate_labels)
            return supcon_loss(gv, cs, tau)[0]

        errors["d_anchor"] = relative_error(
            grads.d_anchor, numeric_gradient(lambda v: sc(v, contrast.candidates), g.copy(), step))
        errors["d_candidates"] = relative_error(
            grads.d_candidates,
            numeric_gradient(lambda v: sc(g, v), contrast.candidates.copy(), step))

    else:  # paco / multitask share the instance layout
        anchor_label = int(rng.integers(0, n_classes))
        contrast = _random_contrast(rng, dim, n_classes, n_cand, anchor_label)
        x = l2_normalize(rng.standard_normal(dim))
        g = l2_normalize(rng.standard_normal(dim))
        centers = 0.5 * rng.standard_normal((n_classes, dim))
        freq = rng.uniform(0.2, 1.0, n_classes)
        bank = CenterBank(centers, freq / freq.sum())

        if kind == "paco":
            cfg = PacoConfig(alpha=float(rng.uniform(0.02, 0.9)), temperature=tau,
                             rebalance_centers=bool(rng.integers(0, 2)))

            def value(xv, gv, cv, zv):
                b = CenterBank(cv, bank.class_freq)
                cs = ContrastSet(0, anchor_label, zv, contrast.candidate_labels)
                return paco_loss(xv, gv, cs, b, anchor_label, cfg)[0].scaled_total

            _, grads = paco_loss(x, g, contrast, bank, anchor_label, cfg,
                                 with_candidate_grads=True)
        else:
            lam = float(rng.uniform(0.0, 1.0))

            def value(xv, gv, cv, zv):
                b = CenterBank(cv, bank.class_freq)
                cs = ContrastSet(0, anchor_label, zv, contrast.candidate_labels)
                return multitask_loss(xv, gv, cs, b, anchor_label, lam, tau)[0]

            _, grads = multitask_loss(x, g, contrast, bank, anchor_label, lam, tau,
                                      with_candidate_grads=True)

        errors["d_anchor_pre"] = relative_error(
            grads.d_anchor_pre,
            numeric_gradient(lambda v: value(v, g, centers, contrast.candidates), x.copy(), step))
        errors["d_anchor_post"] = relative_error(
            grads.d_anchor_post,
            numeric_gradient(lambda v: value(x, v, centers, contrast.candidates), g.copy(), step))
        errors["d_centers"] = relative_error(
            grads.d_centers,
            numeric_gradient(lambda v: value(x, g, v, contrast.candidates), centers.copy(), step))
        errors["d_candidates"] = relative_error(
            grads.d_candidates,
            numeric_gradient(lambda v: value(x, g, centers, v), contrast.candidates.copy(), step))

    return InstanceResult(kind, seed, max(errors.values()), errors)


def instance_seed(base_seed: int, kind: str, index: int) -> int:
    return base_seed * 100003 + KINDS.index(kind) * 1009 + index


@dataclass
class KindSummary:
    kind: str
    n_instances: int
    max_rel_err: float
    median_rel_err: float
    worst_seed: int


@dataclass
class GradCheckReport:
    summaries: list
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(s.max_rel_err < self.tolerance for s in self.summaries)

    def worst(self) -> KindSummary:
        return max(self.summaries, key=lambda s: s.max_rel_err)


def run_gradient_check(base_seed: int = 0, instances_per_loss: int = 100,
                       tolerance: float = 1e-5, step: float = FD_STEP,
                       kinds=KINDS) -> GradCheckReport:
    summaries = []
    for kind in kinds:
        errs, seeds = [], []
        for i in range(instances_per_loss):
            s = instance_seed(base_seed, kind, i)
            errs.append(check_instance(kind, s, step).max_rel_err)
            seeds.append(s)
        worst_idx = int(np.argmax(errs))
        summaries.append(KindSummary(kind, instances_per_loss, float(max(errs)),
                                     float(median(errs)), seeds[worst_idx]))
    return GradCheckReport(summaries, tolerance)


def write_gradcheck_csv(report: GradCheckReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("kind,instances,max_rel_err,median_rel_err,worst_seed\n")
        for s in report.summaries:
            fh.write(f"{s.kind},{s.n_instances},{s.max_rel_err!r},{s.median_rel_err!r},{s.worst_seed}\n")
