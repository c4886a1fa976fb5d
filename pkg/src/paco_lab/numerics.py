"""Scalar/vector primitives shared by every module.

All math runs in float64. Random streams come from a seeded Philox
bit generator so every experiment is bit-reproducible given its seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegenerateInputError


@dataclass(frozen=True)
class Schedule:
    """Cosine decay schedule from base_lr down to 0 over total_steps."""

    base_lr: float
    total_steps: int

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ContractViolation(f"base_lr must be positive, got {self.base_lr}")
        if self.total_steps <= 0:
            raise ContractViolation(f"total_steps must be positive, got {self.total_steps}")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded Philox (counter-based) generator; the single RNG family used everywhere."""
    return np.random.Generator(np.random.Philox(seed))


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ContractViolation(f"expected a 1-D vector, got shape {v.shape}")
    return v


def log_softmax(logits) -> np.ndarray:
    """Numerically stable log(exp(x) / sum(exp(x))) via max subtraction.

    Shift-invariant: adding any constant to all logits leaves the output unchanged.
    """
    x = as_vector(logits)
    if x.size == 0:
        raise ContractViolation("log_softmax of an empty vector")
    if not np.all(np.isfinite(x)):
        raise ContractViolation("log_softmax requires finite logits")
    shifted = x - np.max(x)
    return shifted - np.log(np.sum(np.exp(shifted)))


def logsumexp(logits) -> float:
    """Stable log(sum(exp(x)))."""
    x = as_vector(logits)
    if x.size == 0:
        raise ContractViolation("logsumexp of an empty vector")
    m = np.max(x)
    return float(m + np.log(np.sum(np.exp(x - m))))


def l2_normalize(v) -> np.ndarray:
    """Scale v to unit L2 norm, preserving direction."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateInputError("cannot normalize a zero or non-finite vector")
    return v / norm


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise DegenerateInputError("cannot normalize a zero or non-finite row")
    return m / norms


def cosine_lr(step: int, schedule: Schedule) -> float:
    """base_lr * (1 + cos(pi * step / total_steps)) / 2; equals base_lr at 0 and 0 at the end."""
    if step < 0 or step > schedule.total_steps:
        raise ContractViolation(
            f"step {step} outside [0, {schedule.total_steps}]"
        )
    return schedule.base_lr * (1.0 + np.cos(np.pi * step / schedule.total_steps)) / 2.0
