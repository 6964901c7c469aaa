"""Loss functions with analytic gradients.

Every loss returns a LossReport carrying its scalar value, the fraction
of active (strictly positive hinge) triplets, and the gradient with
respect to its direct inputs. Triplet losses differentiate w.r.t. the
already-normalized embedding rows; pulling those gradients back through
the normalization and the affine map is the model's backward pass.

The three modality-aware triplet losses are combined by a closed-form
weighting that equalizes each loss's gradient contribution while
conserving the total: with active fractions g_i as the per-loss gradient
magnitudes, the weights solve

    w_i * g_i = w_j * g_j  for all active i, j
    sum(w_i * g_i) = sum(g_i)

which gives w_i = (1/n) * sum_k g_k / g_i over the active set. Losses
whose g falls below `eps_g` are dropped from the system (weight 0)
instead of having g clamped upward, so a dead loss cannot be handed an
inflated weight.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import pairwise_distance
from .mining import TripletKind, batch_hard_mine

# Floor on distances when dividing by d_ap / d_an in the hinge gradient;
# only reachable when two embedding rows coincide exactly.
EPS_DIST = 1e-12

ALL_KINDS = (TripletKind.CROSS, TripletKind.WITHIN, TripletKind.HYBRID)


@dataclass
class LossConfig:
    """Shared loss hyperparameters: hinge margin, embedding-loss weight
    in the total objective, and the active-set threshold for weighting."""

    margin: float = 0.2
    lam: float = 1.0
    eps_g: float = 1e-6

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.eps_g <= 0:
            raise ValueError("eps_g must be positive")


@dataclass
class LossReport:
    """Scalar loss value, active-triplet fraction, and input gradient.

    `grad` matches the shape of the loss's direct input: the (B, d)
    embedding matrix for triplet losses, the (B, C) logits for the
    classification loss, and a (grad_photo, grad_sketch) pair of score
    vectors for the adversarial losses.
    """

    value: float
    active_fraction: float
    grad: object


@dataclass
class WeightedLossBundle:
    """Three per-kind triplet reports combined with per-loss weights."""

    kinds: Tuple[TripletKind, ...]
    reports: Tuple[LossReport, ...]
    weights: np.ndarray
    combined_value: float
    combined_grad: np.ndarray


def softmax_ce(logits, labels):
    """Mean softmax cross-entropy over the batch.

    Args:
        logits: (B, C) score matrix, C >= 2.
        labels: (B,) integer labels in [0, C).

    Returns:
        LossReport with grad w.r.t. the logits, (softmax - onehot) / B.
        The active fraction is fixed at 1: classification sits outside
        the triplet weighting scheme.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ValueError("logits must be (B, C) with C >= 2")
    b, c = logits.shape
    if labels.shape != (b,):
        raise ValueError("labels must be (B,)")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"label out of range [0, {c})")

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    value = -float(log_probs[np.arange(b), labels].mean())

    grad = probs.copy()
    grad[np.arange(b), labels] -= 1.0
    grad /= b
    return LossReport(value=value, active_fraction=1.0, grad=grad)


def triplet_hinge(embeddings, triplets, margin):
    """Mean hinge loss over mined triplets, with its embedding gradient.

    value = (1/N) * sum_t max(0, d_ap - d_an + margin). The active
    fraction counts triplets whose hinge argument is strictly positive;
    a triplet exactly on the boundary contributes zero loss and zero
    (sub)gradient.
    """
    if len(triplets) == 0:
        raise ValueError("triplet list is empty")
    e = np.asarray(embeddings, dtype=np.float64)
    a = np.array([t.anchor for t in triplets], dtype=np.int64)
    p = np.array([t.positive for t in triplets], dtype=np.int64)
    n = np.array([t.negative for t in triplets], dtype=np.int64)

    diff_ap = e[a] - e[p]
    diff_an = e[a] - e[n]
    d_ap = np.linalg.norm(diff_ap, axis=1)
    d_an = np.linalg.norm(diff_an, axis=1)
    hinge = d_ap - d_an + margin
    active = hinge > 0.0

    n_trip = len(triplets)
    value = float(np.maximum(hinge, 0.0).sum() / n_trip)
    g = float(active.sum() / n_trip)

    grad = np.zeros_like(e)
    if active.any():
        u_ap = diff_ap[active] / np.maximum(d_ap[active], EPS_DIST)[:, None]
        u_an = diff_an[active] / np.maximum(d_an[active], EPS_DIST)[:, None]
        np.add.at(grad, a[active], (u_ap - u_an) / n_trip)
        np.add.at(grad, p[active], -u_ap / n_trip)
        np.add.at(grad, n[active], u_an / n_trip)
    return LossReport(value=value, active_fraction=g, grad=grad)


def _mined_loss(embeddings, labels, modalities, margin, kind, dist=None):
    if dist is None:
        dist = pairwise_distance(embeddings, embeddings)
    triplets = batch_hard_mine(dist, labels, modalities, kind)
    return triplet_hinge(embeddings, triplets, margin)


def cross_modality_loss(embeddings, labels, modalities, margin):
    """Hardest-triplet hinge where positive and negative both come from
    the modality opposite the anchor's."""
    return _mined_loss(embeddings, labels, modalities, margin, TripletKind.CROSS)


def within_modality_loss(embeddings, labels, modalities, margin):
    """Hardest-triplet hinge mined entirely inside the anchor's modality."""
    return _mined_loss(embeddings, labels, modalities, margin, TripletKind.WITHIN)


def hybrid_loss(embeddings, labels, modalities, margin):
    """Hardest-triplet hinge with a cross-modal positive and a same-modal
    negative; the pull term shrinks the modality gap directly."""
    return _mined_loss(embeddings, labels, modalities, margin, TripletKind.HYBRID)


def gradient_weights(g, eps_g=1e-6):
    """Solve the equal-gradient weighting system over the active set.

    Args:
        g: per-loss gradient magnitudes (active fractions), all >= 0.
        eps_g: losses with g <= eps_g are excluded and get weight 0.

    Returns:
        float64 weight array w, with w_i * g_i equal across the active
        set and sum(w_i * g_i) = sum of active g. All-inactive input
        yields all-zero weights.
    """
    g = np.asarray(g, dtype=np.float64)
    if np.any(g < 0):
        raise ValueError("gradient magnitudes must be non-negative")
    w = np.zeros_like(g)
    active = g > eps_g
    n_active = int(active.sum())
    if n_active == 0:
        return w
    w[active] = g[active].sum() / (n_active * g[active])
    return w


def weighted_embedding_loss(
    embeddings, labels, modalities, cfg, kinds=ALL_KINDS, use_weighting=True
):
    """Mine and combine a set of triplet losses over one batch.

    One distance matrix is shared by all kinds. With `use_weighting`
    the combination weights come from `gradient_weights` on the active
    fractions; otherwise every included loss gets weight 1 (plain sum).
    The weights are constants of the current step: they are not
    differentiated through.
    """
    if len(kinds) == 0:
        raise ValueError("at least one triplet kind is required")
    e = np.asarray(embeddings, dtype=np.float64)
    dist = pairwise_distance(e, e)
    reports = tuple(
        _mined_loss(e, labels, modalities, cfg.margin, kind, dist=dist)
        for kind in kinds
    )
    if use_weighting:
        weights = gradient_weights(
            np.array([r.active_fraction for r in reports]), cfg.eps_g
        )
    else:
        weights = np.ones(len(reports), dtype=np.float64)
    combined_value = float(sum(w * r.value for w, r in zip(weights, reports)))
    combined_grad = np.zeros_like(e)
    for w, r in zip(weights, reports):
        if w != 0.0:
            combined_grad += w * r.grad
    return WeightedLossBundle(
        kinds=tuple(kinds),
        reports=reports,
        weights=weights,
        combined_value=combined_value,
        combined_grad=combined_grad,
    )


def mathm_loss(embeddings, labels, modalities, cfg):
    """Full modality-aware embedding loss: cross, within, and hybrid
    triplet losses combined with gradient-based weighting."""
    return weighted_embedding_loss(
        embeddings, labels, modalities, cfg, kinds=ALL_KINDS, use_weighting=True
    )


def total_loss(cls_report, embed, lam):
    """Combine classification and embedding losses: L_cls + lam * L_embed.

    Both gradients must live in the same space (the trainer maps the
    classification gradient onto the embedding rows before calling).
    `embed` is either a LossReport or a WeightedLossBundle.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if isinstance(embed, WeightedLossBundle):
        e_value, e_grad = embed.combined_value, embed.combined_grad
    else:
        e_value, e_grad = embed.value, embed.grad
    cls_grad = np.asarray(cls_report.grad, dtype=np.float64)
    if cls_grad.shape != e_grad.shape:
        raise ValueError(
            f"gradient shapes differ: {cls_grad.shape} vs {e_grad.shape}"
        )
    return LossReport(
        value=float(cls_report.value + lam * e_value),
        active_fraction=1.0,
        grad=cls_grad + lam * e_grad,
    )


def _clamped(scores, name):
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError(f"{name} scores are empty")
    if s.ndim != 1:
        raise ValueError(f"{name} scores must be 1-D")
    lo, hi = 1e-7, 1.0 - 1e-7
    clamped = np.clip(s, lo, hi)
    interior = (s > lo) & (s < hi)
    return clamped, interior


def adversarial_d_loss(disc_scores_photo, disc_scores_sketch):
    """Discriminator objective: score photos near 1 and sketches near 0.

    value = -(mean log D(photo) + mean log(1 - D(sketch))), scores
    clamped to [1e-7, 1 - 1e-7] before the logs. `grad` is the pair
    (d/d photo_scores, d/d sketch_scores); entries where the clamp binds
    get zero gradient.
    """
    sp, in_p = _clamped(disc_scores_photo, "photo")
    ss, in_s = _clamped(disc_scores_sketch, "sketch")
    value = -(float(np.log(sp).mean()) + float(np.log1p(-ss).mean()))
    grad_p = np.where(in_p, -1.0 / (len(sp) * sp), 0.0)
    grad_s = np.where(in_s, 1.0 / (len(ss) * (1.0 - ss)), 0.0)
    return LossReport(value=value, active_fraction=1.0, grad=(grad_p, grad_s))


def adversarial_g_loss(disc_scores_photo, disc_scores_sketch):
    """Generator objective: push the discriminator toward the wrong
    modality call on every sample (labels flipped relative to the
    discriminator loss)."""
    sp, in_p = _clamped(disc_scores_photo, "photo")
    ss, in_s = _clamped(disc_scores_sketch, "sketch")
    value = -(float(np.log1p(-sp).mean()) + float(np.log(ss).mean()))
    grad_p = np.where(in_p, 1.0 / (len(sp) * (1.0 - sp)), 0.0)
    grad_s = np.where(in_s, -1.0 / (len(ss) * ss), 0.0)
    return LossReport(value=value, active_fraction=1.0, grad=(grad_p, grad_s))
