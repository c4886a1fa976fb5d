"""Momentum dictionary: FIFO key queue, key-network momentum update, contrast sets.

The queue stores MLP-head outputs of the key network together with their labels.
A contrast set for anchor i collects every stored key plus both views of the
current batch, minus the anchor's own first-view embedding.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ContractViolation


@dataclass
class EncoderParams:
    """Parameters of one encoder tower: linear map plus the two-layer MLP head."""

    encoder: np.ndarray  # (input_dim, embed_dim)
    mlp_w1: np.ndarray   # (embed_dim, embed_dim)
    mlp_b1: np.ndarray   # (embed_dim,)
    mlp_w2: np.ndarray   # (embed_dim, embed_dim)
    mlp_b2: np.ndarray   # (embed_dim,)

    def arrays(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def copy(self) -> "EncoderParams":
        return EncoderParams(**{name: arr.copy() for name, arr in self.arrays()})


def momentum_update(key_params: EncoderParams, query_params: EncoderParams, m: float) -> EncoderParams:
    """Move key parameters toward query parameters: theta_k' = m*theta_k + (1-m)*theta_q."""
    if not (0.0 <= m <= 1.0):
        raise ContractViolation(f"momentum coefficient must lie in [0, 1], got {m}")
    out = {}
    for (name, k_arr), (_, q_arr) in zip(key_params.arrays(), query_params.arrays()):
        if k_arr.shape != q_arr.shape:
            raise ContractViolation(f"shape mismatch on {name}: {k_arr.shape} vs {q_arr.shape}")
        out[name] = m * k_arr + (1.0 - m) * q_arr
    return EncoderParams(**out)


class MomentumQueue:
    """Fixed-capacity FIFO of (unit-norm key embedding, label) pairs.

    Backed by a ring buffer; eviction is per entry, so capacity need not
    divide the batch size. Single-owner mutable state.
    """

    def __init__(self, capacity: int, dim: int):
        if capacity <= 0:
            raise ContractViolation(f"capacity must be positive, got {capacity}")
        if dim <= 0:
            raise ContractViolation(f"dim must be positive, got {dim}")
        self.capacity = capacity
        self.dim = dim
        self._embeddings = np.zeros((capacity, dim), dtype=np.float64)
        self._labels = np.zeros(capacity, dtype=np.int64)
        self.write_cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """Current contents in FIFO order (oldest first)."""
        if self._size < self.capacity:
            idx = np.arange(self._size)
        else:
            idx = (np.arange(self.capacity) + self.write_cursor) % self.capacity
        return self._embeddings[idx].copy(), self._labels[idx].copy()

    def to_dict(self) -> dict:
        embs, labels = self.snapshot()
        return {
            "capacity": self.capacity,
            "dim": self.dim,
            "embeddings": embs.tolist(),
            "labels": labels.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MomentumQueue":
        q = cls(int(d["capacity"]), int(d["dim"]))
        embs = np.asarray(d["embeddings"], dtype=np.float64).reshape(-1, q.dim)
        labels = np.asarray(d["labels"], dtype=np.int64)
        if len(labels):
            enqueue_batch(q, embs, labels)
        return q


def enqueue_batch(queue: MomentumQueue, keys: np.ndarray, labels: np.ndarray) -> MomentumQueue:
    """Append keys in order, evicting the oldest entries once full."""
    keys = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if keys.shape[0] != labels.shape[0]:
        raise ContractViolation("keys and labels length mismatch")
    if keys.shape[1] != queue.dim:
        raise ContractViolation(f"key dim {keys.shape[1]} does not match queue dim {queue.dim}")
    for k, lab in zip(keys, labels):
        queue._embeddings[queue.write_cursor] = k
        queue._labels[queue.write_cursor] = lab
        queue.write_cursor = (queue.write_cursor + 1) % queue.capacity
        queue._size = min(queue._size + 1, queue.capacity)
    return queue


@dataclass
class ContrastSet:
    """Candidate keys for one anchor: embeddings, labels, and the positive mask."""

    anchor_index: int
    anchor_label: int
    candidates: np.ndarray      # (m, dim)
    candidate_labels: np.ndarray  # (m,)
    positive_mask: np.ndarray = field(default=None)  # (m,) bool

    def __post_init__(self):
        self.candidates = np.atleast_2d(np.asarray(self.candidates, dtype=np.float64))
        if self.candidates.size == 0:
            self.candidates = self.candidates.reshape(0, 0)
        self.candidate_labels = np.asarray(self.candidate_labels, dtype=np.int64)
        if self.positive_mask is None:
            self.positive_mask = self.candidate_labels == self.anchor_label
        else:
            self.positive_mask = np.asarray(self.positive_mask, dtype=bool)
            if not np.array_equal(self.positive_mask, self.candidate_labels == self.anchor_label):
                raise ContractViolation("positive_mask inconsistent with candidate labels")

    def __len__(self) -> int:
        return self.candidate_labels.shape[0]

    @property
    def n_positives(self) -> int:
        return int(np.sum(self.positive_mask))

    @classmethod
    def empty(cls, anchor_label: int, dim: int) -> "ContrastSet":
        return cls(0, anchor_label, np.zeros((0, dim)), np.zeros(0, dtype=np.int64))


def build_contrast_set(
    i: int,
    batch_v1_embs: np.ndarray,
    batch_v2_embs: np.ndarray,
    batch_labels: np.ndarray,
    queue: MomentumQueue,
) -> ContrastSet:
    """Assemble the candidate set for anchor i: queue + both batch views, minus anchor's v1.

    The anchor's own second view stays in (it shares the label, so it is a positive).
    """
    v1 = np.atleast_2d(np.asarray(batch_v1_embs, dtype=np.float64))
    v2 = np.atleast_2d(np.asarray(batch_v2_embs, dtype=np.float64))
    labels = np.asarray(batch_labels, dtype=np.int64)
    if not (v1.shape[0] == v2.shape[0] == labels.shape[0]):
        raise ContractViolation("batch views and labels must have equal length")
    if not (0 <= i < labels.shape[0]):
        raise ContractViolation(f"anchor index {i} out of range")
    q_embs, q_labels = queue.snapshot()
    keep = np.arange(labels.shape[0]) != i
    candidates = np.concatenate([q_embs.reshape(-1, v1.shape[1]), v1[keep], v2], axis=0)
    cand_labels = np.concatenate([q_labels, labels[keep], labels])
    return ContrastSet(i, int(labels[i]), candidates, cand_labels)


def expected_positives(q_y: float, queue_len: int, batch_size: int) -> tuple[float, float]:
    """Expected same-class candidate count: exact form and the long-queue approximation."""
    if not (0.0 < q_y <= 1.0):
        raise ContractViolation(f"class frequency must lie in (0, 1], got {q_y}")
    exact = q_y * (queue_len + 2 * batch_size - 1)
    approx = queue_len * q_y
    return exact, approx
