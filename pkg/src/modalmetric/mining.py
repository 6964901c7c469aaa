"""Modality-aware batch-hard triplet selection.

Three triplet kinds are distinguished by where the positive and negative
live relative to the anchor's modality:

  CROSS   positive and negative both in the other modality
  WITHIN  positive and negative both in the anchor's modality
  HYBRID  positive in the other modality, negative in the anchor's

Every batch sample serves as an anchor. Per anchor, the positive is the
farthest same-class candidate and the negative the nearest other-class
candidate, restricted to the kind's modality pattern; distance ties are
broken toward the lowest batch index so the result is deterministic.

`batch_hard_mine` is the vectorized implementation used in training;
`brute_force_mine` re-derives the same triplets by exhaustive enumeration
and exists so the two can be checked against each other.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import MiningError
from .geometry import pairwise_distance


class TripletKind(Enum):
    CROSS = "cross"
    WITHIN = "within"
    HYBRID = "hybrid"

    def positive_modality(self, anchor_modality):
        if self is TripletKind.WITHIN:
            return anchor_modality
        return 1 - anchor_modality

    def negative_modality(self, anchor_modality):
        if self is TripletKind.CROSS:
            return 1 - anchor_modality
        return anchor_modality


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int
    kind: TripletKind


def _as_arrays(labels, modalities):
    labels = np.asarray(labels, dtype=np.int64)
    modalities = np.asarray(modalities, dtype=np.int64)
    if labels.shape != modalities.shape or labels.ndim != 1:
        raise ValueError("labels and modalities must be 1-D and equal length")
    return labels, modalities


def batch_hard_mine(dist, labels, modalities, kind, anchors=None):
    """Mine one hardest triplet per anchor from a precomputed distance matrix.

    Args:
        dist: (B, B) distance matrix over the batch embeddings.
        labels: (B,) class labels.
        modalities: (B,) modality flags (0 sketch, 1 photo).
        kind: TripletKind selecting the modality pattern.
        anchors: optional iterable of anchor indices; defaults to the
            whole batch.

    Returns:
        list of Triplet, in anchor order.

    Raises:
        MiningError: if some anchor has no valid positive or negative.
    """
    dist = np.asarray(dist, dtype=np.float64)
    labels, modalities = _as_arrays(labels, modalities)
    n = labels.shape[0]
    if dist.shape != (n, n):
        raise ValueError(f"dist must be ({n}, {n}), got {dist.shape}")
    if anchors is None:
        anchors = np.arange(n)
    else:
        anchors = np.asarray(list(anchors), dtype=np.int64)

    a_mod = modalities[anchors]
    pos_mod = a_mod if kind is TripletKind.WITHIN else 1 - a_mod
    neg_mod = 1 - a_mod if kind is TripletKind.CROSS else a_mod

    same_label = labels[anchors][:, None] == labels[None, :]
    pos_mask = same_label & (modalities[None, :] == pos_mod[:, None])
    pos_mask[np.arange(len(anchors)), anchors] = False  # the anchor itself
    neg_mask = (~same_label) & (modalities[None, :] == neg_mod[:, None])

    for row, a in enumerate(anchors):
        if not pos_mask[row].any():
            raise MiningError(
                f"anchor {int(a)}: no valid positive for kind {kind.value}"
            )
        if not neg_mask[row].any():
            raise MiningError(
                f"anchor {int(a)}: no valid negative for kind {kind.value}"
            )

    d_rows = dist[anchors]
    pos = np.argmax(np.where(pos_mask, d_rows, -np.inf), axis=1)
    neg = np.argmin(np.where(neg_mask, d_rows, np.inf), axis=1)
    return [
        Triplet(int(a), int(p), int(m), kind)
        for a, p, m in zip(anchors, pos, neg)
    ]


def brute_force_mine(embeddings, labels, modalities, kind, anchors=None):
    """Reference miner: exhaustive scan with the same tie-break rule.

    Takes raw embeddings (unit rows) rather than a distance matrix, and
    must agree with `batch_hard_mine` exactly on every batch.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels, modalities = _as_arrays(labels, modalities)
    dist = pairwise_distance(embeddings, embeddings)
    n = labels.shape[0]
    if anchors is None:
        anchors = range(n)

    triplets = []
    for a in anchors:
        want_pos = kind.positive_modality(modalities[a])
        want_neg = kind.negative_modality(modalities[a])
        best_pos, best_pos_d = None, None
        best_neg, best_neg_d = None, None
        for j in range(n):
            if j != a and labels[j] == labels[a] and modalities[j] == want_pos:
                if best_pos is None or dist[a, j] > best_pos_d:
                    best_pos, best_pos_d = j, dist[a, j]
            if labels[j] != labels[a] and modalities[j] == want_neg:
                if best_neg is None or dist[a, j] < best_neg_d:
                    best_neg, best_neg_d = j, dist[a, j]
        if best_pos is None:
            raise MiningError(
                f"anchor {int(a)}: no valid positive for kind {kind.value}"
            )
        if best_neg is None:
            raise MiningError(
                f"anchor {int(a)}: no valid negative for kind {kind.value}"
            )
        triplets.append(Triplet(int(a), best_pos, best_neg, kind))
    return triplets
