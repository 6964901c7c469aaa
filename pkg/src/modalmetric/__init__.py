"""modalmetric: cross-modality metric learning on sketch/photo data.

Trains small normalized embedders with modality-aware batch-hard triplet
losses balanced by closed-form gradient weighting, and evaluates them
with zero-shot retrieval metrics and modality-gap diagnostics.
"""

from .data import (
    Dataset,
    Modality,
    PKSampler,
    SampleRecord,
    SamplerConfig,
    SyntheticConfig,
    generate_synthetic,
    pk_sample,
    read_dataset,
    write_dataset,
    zero_shot_split,
)
from .errors import (
    ConfigError,
    DataError,
    MetricError,
    MiningError,
    ModalMetricError,
    NumericError,
    ProtocolError,
)
from .evaluation import (
    RankedList,
    RetrievalMetrics,
    average_precision,
    between_class_discrepancy,
    compute_metrics,
    map_at_all,
    map_at_n,
    modality_gap,
    prec_at_k,
    retrieve,
    within_class_similarity,
)
from .geometry import (
    cosine_matrix,
    finite_diff_check,
    l2_normalize,
    pairwise_distance,
)
from .losses import (
    ALL_KINDS,
    LossConfig,
    LossReport,
    WeightedLossBundle,
    adversarial_d_loss,
    adversarial_g_loss,
    cross_modality_loss,
    gradient_weights,
    hybrid_loss,
    mathm_loss,
    softmax_ce,
    total_loss,
    triplet_hinge,
    weighted_embedding_loss,
    within_modality_loss,
)
from .mining import Triplet, TripletKind, batch_hard_mine, brute_force_mine
from .model import (
    AdamState,
    ClassifierParams,
    DiscriminatorParams,
    EmbedderParams,
    ModelParams,
    adam_step,
    cosine_lr,
    embed_backward,
    embed_forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    METHOD_RECIPES,
    TrainConfig,
    TrainResult,
    ablation_variants,
    log_columns,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_KINDS",
    "AdamState",
    "ClassifierParams",
    "ConfigError",
    "DataError",
    "Dataset",
    "DiscriminatorParams",
    "EmbedderParams",
    "LossConfig",
    "LossReport",
    "METHOD_RECIPES",
    "MetricError",
    "MiningError",
    "ModalMetricError",
    "Modality",
    "ModelParams",
    "NumericError",
    "PKSampler",
    "ProtocolError",
    "RankedList",
    "RetrievalMetrics",
    "SampleRecord",
    "SamplerConfig",
    "SyntheticConfig",
    "TrainConfig",
    "TrainResult",
    "Triplet",
    "TripletKind",
    "WeightedLossBundle",
    "ablation_variants",
    "adam_step",
    "adversarial_d_loss",
    "adversarial_g_loss",
    "average_precision",
    "batch_hard_mine",
    "between_class_discrepancy",
    "brute_force_mine",
    "compute_metrics",
    "cosine_lr",
    "cosine_matrix",
    "cross_modality_loss",
    "embed_backward",
    "embed_forward",
    "finite_diff_check",
    "generate_synthetic",
    "gradient_weights",
    "hybrid_loss",
    "init_params",
    "l2_normalize",
    "load_checkpoint",
    "log_columns",
    "map_at_all",
    "map_at_n",
    "mathm_loss",
    "modality_gap",
    "pairwise_distance",
    "pk_sample",
    "prec_at_k",
    "read_dataset",
    "retrieve",
    "save_checkpoint",
    "softmax_ce",
    "total_loss",
    "train",
    "triplet_hinge",
    "weighted_embedding_loss",
    "within_class_similarity",
    "within_modality_loss",
    "write_dataset",
    "zero_shot_split",
]
