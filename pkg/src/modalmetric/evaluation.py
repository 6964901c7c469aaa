"""Retrieval metrics (non-interpolated mAP, precision at k, truncated
mAP) and embedding-space diagnostics: the within-class modality gap and
between-class discrepancies under same- and cross-modality pairing.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MetricError
from .geometry import cosine_matrix, pairwise_distance

DEFAULT_PREC_K = 100
DEFAULT_TRUNCATION = 200


def thread_count():
    """Worker cap for per-query metric loops, from MODALMETRIC_THREADS
    (0 or unset = auto)."""
    raw = os.environ.get("MODALMETRIC_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(
            f"MODALMETRIC_THREADS must be an integer, got {raw!r}"
        ) from None
    if n < 0:
        raise ConfigError("MODALMETRIC_THREADS must be >= 0")
    if n == 0:
        return min(8, os.cpu_count() or 1)
    return n


def _parallel_map(fn, items):
    workers = thread_count()
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class RankedList:
    """One query's gallery ordering (ascending distance, ties by lowest
    gallery index) and, when labels were supplied, per-position relevance
    flags."""

    order: np.ndarray
    distances: np.ndarray
    relevance: np.ndarray = None


def retrieve(query_embeddings, gallery_embeddings, query_labels=None,
             gallery_labels=None):
    """Rank the gallery for every query by ascending Euclidean distance.

    Args:
        query_embeddings: (Q, d) unit rows.
        gallery_embeddings: (G, d) unit rows, G >= 1.
        query_labels / gallery_labels: optional class labels; when both
            are given each RankedList carries relevance flags
            (same class = relevant).

    Returns:
        list of Q RankedList.
    """
    gallery = np.asarray(gallery_embeddings, dtype=np.float64)
    if gallery.ndim != 2 or gallery.shape[0] == 0:
        raise ValueError("gallery must be a non-empty 2-d array")
    dist = pairwise_distance(query_embeddings, gallery)
    orders = np.argsort(dist, axis=1, kind="stable")
    with_labels = query_labels is not None and gallery_labels is not None
    if with_labels:
        q_labels = np.asarray(query_labels)
        g_labels = np.asarray(gallery_labels)
    ranked = []
    for q, order in enumerate(orders):
        rel = None
        if with_labels:
            rel = (g_labels[order] == q_labels[q]).astype(np.int64)
        ranked.append(RankedList(order, dist[q, order], rel))
    return ranked


def average_precision(relevance, truncate_at=None):
    """Non-interpolated AP of one relevance vector.

    With truncate_at=n, only the top n positions contribute precision
    terms and the denominator becomes min(total relevant, n).

    Raises:
        MetricError: when the query has no relevant item at all.
    """
    rel = np.asarray(relevance, dtype=np.float64)
    total_relevant = int(rel.sum())
    if total_relevant == 0:
        raise MetricError("query has no relevant gallery item")
    if truncate_at is not None:
        head = rel[:truncate_at]
        denominator = min(total_relevant, truncate_at)
    else:
        head = rel
        denominator = total_relevant
    ranks = np.arange(1, head.size + 1)
    precisions = np.cumsum(head) / ranks
    return float((precisions * head).sum() / denominator)


def _require_relevance(ranked):
    for q, r in enumerate(ranked):
        if r.relevance is None:
            raise ValueError(f"ranked list {q} carries no relevance flags")
        if int(np.sum(r.relevance)) == 0:
            raise MetricError(f"query {q} has no relevant gallery item")


def map_at_all(ranked):
    """Mean non-interpolated AP over queries."""
    _require_relevance(ranked)
    aps = _parallel_map(lambda r: average_precision(r.relevance), ranked)
    return float(np.mean(aps))


def map_at_n(ranked, n):
    """Mean AP over lists truncated to their top n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _require_relevance(ranked)
    aps = _parallel_map(
        lambda r: average_precision(r.relevance, truncate_at=n), ranked
    )
    return float(np.mean(aps))


def prec_at_k(ranked, k):
    """Mean fraction of relevant items in each query's top min(k, G)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _require_relevance(ranked)
    fractions = []
    for r in ranked:
        m = min(k, r.relevance.size)
        fractions.append(float(np.sum(r.relevance[:m])) / m)
    return float(np.mean(fractions))


def _class_modality_similarities(embeddings, labels, modalities):
    """Per-class mean cosine over same-modality and cross-modality
    same-class pairs (unordered, self-pairs excluded)."""
    e = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    mods = np.asarray(modalities)
    cos = cosine_matrix(e, e)
    upper = np.triu(np.ones(cos.shape, dtype=bool), k=1)
    same_mod = mods[:, None] == mods[None, :]
    s_same, s_cross = [], []
    for c in np.unique(labels):
        in_class = labels == c
        for m in (0, 1):
            if int(np.sum(in_class & (mods == m))) < 2:
                raise MetricError(
                    f"class {c} needs >= 2 samples in each modality"
                )
        pair = in_class[:, None] & in_class[None, :] & upper
        s_same.append(cos[pair & same_mod].mean())
        s_cross.append(cos[pair & ~same_mod].mean())
    return np.array(s_same), np.array(s_cross)


def modality_gap(embeddings, labels, modalities):
    """Mean over classes of (same-modality minus cross-modality average
    within-class cosine similarity)."""
    s_same, s_cross = _class_modality_similarities(
        embeddings, labels, modalities
    )
    return float(np.mean(s_same - s_cross))


def within_class_similarity(embeddings, labels, modalities):
    """(mean same-modality, mean cross-modality) within-class cosine,
    averaged per class first."""
    s_same, s_cross = _class_modality_similarities(
        embeddings, labels, modalities
    )
    return float(np.mean(s_same)), float(np.mean(s_cross))


def between_class_discrepancy(embeddings, labels, modalities):
    """Average same-class minus different-class cosine similarity,
    computed separately over same-modality and cross-modality pairs.

    Returns:
        (same_modality, cross_modality) discrepancies.
    """
    e = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    mods = np.asarray(modalities)
    if np.unique(labels).size < 2:
        raise MetricError("between-class discrepancy needs >= 2 classes")
    cos = cosine_matrix(e, e)
    upper = np.triu(np.ones(cos.shape, dtype=bool), k=1)
    same_mod = mods[:, None] == mods[None, :]
    same_cls = labels[:, None] == labels[None, :]
    out = []
    for condition, name in ((same_mod, "same-modality"),
                            (~same_mod, "cross-modality")):
        pool = upper & condition
        pos = pool & same_cls
        neg = pool & ~same_cls
        if not pos.any() or not neg.any():
            raise MetricError(f"empty {name} pair pool")
        out.append(float(cos[pos].mean() - cos[neg].mean()))
    return tuple(out)


@dataclass
class RetrievalMetrics:
    """Retrieval scores plus embedding-space diagnostics; serialized as
    one flat JSON object."""

    map_at_all: float
    prec_at_k: float
    k: int
    map_at_200: float
    prec_at_200: float
    modality_gap: float
    between_class_same_modality: float
    between_class_cross_modality: float
    within_class_same_modality: float
    within_class_cross_modality: float

    def to_dict(self):
        return {
            "map_at_all": self.map_at_all,
            "prec_at_k": self.prec_at_k,
            "k": self.k,
            "map_at_200": self.map_at_200,
            "prec_at_200": self.prec_at_200,
            "modality_gap": self.modality_gap,
            "between_class_same_modality": self.between_class_same_modality,
            "between_class_cross_modality": self.between_class_cross_modality,
            "within_class_same_modality": self.within_class_same_modality,
            "within_class_cross_modality": self.within_class_cross_modality,
        }


def compute_metrics(embeddings, labels, modalities, k=DEFAULT_PREC_K,
                    query_modality=0):
    """Full evaluation of one embedded set: queries are the rows of
    query_modality (sketches by default), the gallery is the other
    modality.
    """
    e = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    mods = np.asarray(modalities)
    if query_modality not in (0, 1):
        raise ValueError("query_modality must be 0 or 1")
    is_query = mods == query_modality
    if not is_query.any() or is_query.all():
        raise MetricError("evaluation set must contain both modalities")
    ranked = retrieve(e[is_query], e[~is_query],
                      labels[is_query], labels[~is_query])
    same, cross = between_class_discrepancy(e, labels, mods)
    w_same, w_cross = within_class_similarity(e, labels, mods)
    return RetrievalMetrics(
        map_at_all=map_at_all(ranked),
        prec_at_k=prec_at_k(ranked, k),
        k=k,
        map_at_200=map_at_n(ranked, DEFAULT_TRUNCATION),
        prec_at_200=prec_at_k(ranked, DEFAULT_TRUNCATION),
        modality_gap=modality_gap(e, labels, mods),
        between_class_same_modality=same,
        between_class_cross_modality=cross,
        within_class_same_modality=w_same,
        within_class_cross_modality=w_cross,
    )
