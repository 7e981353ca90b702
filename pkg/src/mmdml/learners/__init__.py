from .base import (
    EmbeddingSpec,
    FittedLearner,
    FusionArch,
    FusionSpec,
    GbtSpec,
    LearnerSpec,
    OracleSpec,
    RidgeSpec,
    assemble_features,
    fit,
    nuisance_loss_report,
)
from .fusion import (
    FusionNet,
    combined_loss,
    extract_embedding,
    fit_embedding_model,
    load_weights,
    save_weights,
    train_fusion,
)

__all__ = [
    "EmbeddingSpec",
    "FittedLearner",
    "FusionArch",
    "FusionNet",
    "FusionSpec",
    "GbtSpec",
    "LearnerSpec",
    "OracleSpec",
    "RidgeSpec",
    "assemble_features",
    "combined_loss",
    "extract_embedding",
    "fit",
    "fit_embedding_model",
    "load_weights",
    "nuisance_loss_report",
    "save_weights",
    "train_fusion",
]
