"""Training loop: PK-sampled batches, per-method loss recipes, Adam with
cosine decay, per-iteration diagnostics rows, and the alternating
generator/discriminator schedule for the adversarial variant.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, PKSampler, SamplerConfig
from .errors import ConfigError, NumericError
from .losses import (
    ALL_KINDS,
    LossConfig,
    LossReport,
    adversarial_d_loss,
    adversarial_g_loss,
    softmax_ce,
    total_loss,
    weighted_embedding_loss,
)
from .mining import TripletKind
from .model import (
    AdamState,
    adam_step,
    cosine_lr,
    embed_backward,
    embed_forward,
    init_params,
)

# method tag -> (triplet kinds, gradient weighting, adversarial heads)
METHOD_RECIPES = {
    "cls-only": ((), False, False),
    "baseline": ((TripletKind.CROSS,), False, False),
    "mathm": (ALL_KINDS, True, False),
    "gan": ((TripletKind.CROSS,), False, True),
}

KIND_TAGS = {
    TripletKind.CROSS: "cross",
    TripletKind.WITHIN: "in",
    TripletKind.HYBRID: "hyb",
}


@dataclass
class TrainConfig:
    """Knobs for one training run.

    triplet_kinds / use_weighting default to the method recipe; setting
    them explicitly carves out ablation variants (e.g. all three losses
    without gradient weighting).
    """

    method: str = "mathm"
    d_emb: int = 16
    classes_per_batch: int = 8
    samples_per_class: int = 4
    base_lr: float = 1e-4
    total_iters: int = 2000
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    triplet_kinds: tuple = None
    use_weighting: bool = None
    # The discriminator must track the embedder for the adversarial
    # game to reach alignment rather than oscillate; a shallow one-layer
    # head at the shared base_lr lags badly at desk scale, so it gets a
    # faster clock. Mirrors the 10:1 spread between fresh heads and the
    # 0.1x-lr backbone in the usual pretrained setup.
    disc_lr_scale: float = 100.0

    def __post_init__(self):
        if self.method not in METHOD_RECIPES:
            raise ConfigError(
                f"unknown method {self.method!r}; expected one of "
                f"{sorted(METHOD_RECIPES)}"
            )
        if self.total_iters < 1:
            raise ConfigError("total_iters must be >= 1")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if self.d_emb < 2:
            raise ConfigError("d_emb must be >= 2")
        if self.disc_lr_scale <= 0:
            raise ConfigError("disc_lr_scale must be positive")

    def recipe(self):
        """Resolve (kinds, use_weighting, adversarial) for this run."""
        kinds, weighting, adversarial = METHOD_RECIPES[self.method]
        if self.triplet_kinds is not None:
            kinds = tuple(self.triplet_kinds)
        if self.use_weighting is not None:
            weighting = self.use_weighting
        return kinds, weighting, adversarial

    def to_dict(self):
        """JSON-serializable snapshot, stored in checkpoints."""
        kinds = self.triplet_kinds
        return {
            "method": self.method,
            "d_emb": self.d_emb,
            "classes_per_batch": self.classes_per_batch,
            "samples_per_class": self.samples_per_class,
            "base_lr": self.base_lr,
            "total_iters": self.total_iters,
            "seed": self.seed,
            "margin": self.loss.margin,
            "lam": self.loss.lam,
            "eps_g": self.loss.eps_g,
            "triplet_kinds": None if kinds is None
                else [k.name for k in kinds],
            "use_weighting": self.use_weighting,
            "disc_lr_scale": self.disc_lr_scale,
        }


@dataclass
class TrainResult:
    params: object
    log: list
    config: TrainConfig
    train_class_ids: tuple


def log_columns(config):
    """Column order of the per-iteration log for this run's recipe."""
    kinds, weighting, adversarial = config.recipe()
    cols = ["iter", "lr", "l_cls"]
    cols += [f"l_{KIND_TAGS[k]}" for k in kinds]
    cols += [f"g_{KIND_TAGS[k]}" for k in kinds]
    if weighting:
        cols += [f"w_{KIND_TAGS[k]}" for k in kinds]
    if adversarial:
        cols += ["l_adv_g", "l_adv_d"]
    cols.append("l_total")
    return cols


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _discriminator_scores(params, embeddings):
    raw = embeddings @ params.discriminator.w_d + params.discriminator.b_d
    return _sigmoid(raw)


def _score_backward(params, embeddings, scores, d_scores):
    """Backprop through sigmoid(E @ w_d + b_d); returns (dE, dw_d, db_d)."""
    d_raw = d_scores * scores * (1.0 - scores)
    d_e = d_raw[:, None] * params.discriminator.w_d[None, :]
    d_w = embeddings.T @ d_raw
    d_b = np.asarray(d_raw.sum())
    return d_e, d_w, d_b


def train(dataset: Dataset, config: TrainConfig):
    """Run the full optimization on one dataset.

    One shared rng (seeded from config.seed) drives parameter init and
    batch sampling, so runs are bit-reproducible. Each iteration appends
    one ordered dict-like row of diagnostics (see log_columns).

    Raises:
        NumericError: if any loss or gradient turns non-finite, naming
            the iteration.
    """
    dataset.validate()
    kinds, weighting, adversarial = config.recipe()
    rng = np.random.default_rng(config.seed)
    params = init_params(dataset.d_in, config.d_emb, dataset.n_classes, rng)
    sampler = PKSampler(
        dataset,
        SamplerConfig(config.classes_per_batch, config.samples_per_class),
        rng=rng,
    )
    features = dataset.features
    labels = dataset.labels
    modalities = dataset.modalities

    main_names = ("embedder.W", "embedder.b", "embedder.modality_offset",
                  "classifier.W_c")
    disc_names = ("discriminator.w_d", "discriminator.b_d")
    tensors = params.tensors()
    main_params = {k: tensors[k] for k in main_names}
    disc_params = {k: tensors[k] for k in disc_names}
    main_state = AdamState()
    disc_state = AdamState()

    log = []
    for it in range(config.total_iters):
        lr = cosine_lr(config.base_lr, it, config.total_iters)
        idx = sampler.sample()
        x = features[idx]
        y = labels[idx]
        mods = modalities[idx]
        photo = mods == 1

        embeddings, cache = embed_forward(params.embedder, x, mods)
        logits = embeddings @ params.classifier.W_c.T
        cls = softmax_ce(logits, y)
        d_logits = cls.grad
        d_wc = d_logits.T @ embeddings
        cls_on_embed = LossReport(cls.value, cls.active_fraction,
                                  d_logits @ params.classifier.W_c)

        row = {"iter": it, "lr": lr, "l_cls": cls.value}
        if kinds:
            bundle = weighted_embedding_loss(
                embeddings, y, mods, config.loss, kinds, weighting
            )
            combined = total_loss(cls_on_embed, bundle, config.loss.lam)
            d_embed = combined.grad
            value = combined.value
            for k, report in zip(bundle.kinds, bundle.reports):
                row[f"l_{KIND_TAGS[k]}"] = report.value
            for k, report in zip(bundle.kinds, bundle.reports):
                row[f"g_{KIND_TAGS[k]}"] = report.active_fraction
            if weighting:
                for k, w in zip(bundle.kinds, bundle.weights):
                    row[f"w_{KIND_TAGS[k]}"] = float(w)
        else:
            d_embed = cls_on_embed.grad
            value = cls.value

        if adversarial:
            scores = _discriminator_scores(params, embeddings)
            g_report = adversarial_g_loss(scores[photo], scores[~photo])
            d_scores = np.zeros_like(scores)
            d_scores[photo], d_scores[~photo] = g_report.grad
            d_e_adv, _, _ = _score_backward(params, embeddings, scores,
                                            d_scores)
            d_embed = d_embed + d_e_adv
            value = value + g_report.value
            row["l_adv_g"] = g_report.value

        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at iteration {it}")
        grads_e = embed_backward(cache, d_embed)
        grads = {
            "embedder.W": grads_e["W"],
            "embedder.b": grads_e["b"],
            "embedder.modality_offset": grads_e["modality_offset"],
            "classifier.W_c": d_wc,
        }
        adam_step(main_params, grads, main_state, lr)

        if adversarial:
            # Discriminator step on the freshly updated (frozen) embedder.
            fresh, _ = embed_forward(params.embedder, x, mods)
            scores = _discriminator_scores(params, fresh)
            d_report = adversarial_d_loss(scores[photo], scores[~photo])
            d_scores = np.zeros_like(scores)
            d_scores[photo], d_scores[~photo] = d_report.grad
            _, d_w, d_b = _score_backward(params, fresh, scores, d_scores)
            adam_step(
                disc_params,
                {"discriminator.w_d": d_w, "discriminator.b_d": d_b},
                disc_state,
                lr * config.disc_lr_scale,
            )
            row["l_adv_d"] = d_report.value

        row["l_total"] = float(value)
        log.append(row)

    return TrainResult(params, log, config, tuple(dataset.class_ids))


def ablation_variants(config: TrainConfig):
    """The eight rows of the loss ablation: classification only, each
    triplet loss alone, the two pairs anchored on the cross-modality
    loss, and all three losses with and without gradient weighting.

    Returns:
        list of (row_name, TrainConfig).
    """
    cross, within, hybrid = ALL_KINDS
    rows = [
        ("cls-only", (), False),
        ("cross", (cross,), False),
        ("within", (within,), False),
        ("hybrid", (hybrid,), False),
        ("cross+within", (cross, within), False),
        ("cross+hybrid", (cross, hybrid), False),
        ("all", ALL_KINDS, False),
        ("all+gw", ALL_KINDS, True),
    ]
    variants = []
    for name, kinds, weighting in rows:
        method = "cls-only" if not kinds else "mathm"
        variants.append(
            (name, replace(config, method=method, triplet_kinds=kinds,
                           use_weighting=weighting))
        )
    return variants
