"""Default learner registry and the desk-scale benchmark configuration."""

from __future__ import annotations

from .core import ModalitySpec
from .dgp import DgpConfig
from .evaluation import ModelEntry
from .learners import EmbeddingSpec, FusionArch, FusionSpec, GbtSpec, OracleSpec, RidgeSpec


def default_learners(seed: int = 0) -> dict:
    """Named learner specs available to the CLI without a config file."""
    fusion = FusionSpec(
        arch=FusionArch(encoder_widths=(16,), fusion_width=32, embedding_dim=16, activation="relu"),
        epochs=40,
        batch_size=256,
        step_size=0.05,
        weight_init_scale=1.0,
        seed=seed,
    )
    gbt = GbtSpec(trees=150, depth=2, learning_rate=0.1, subsample=1.0, seed=seed)
    return {
        "ridge": RidgeSpec(penalty=1.0, seed=seed),
        "gbt": gbt,
        "fusion": fusion,
        "embedding": EmbeddingSpec(fusion=fusion, gbt=gbt, seed=seed),
        "oracle": OracleSpec(seed=seed),
    }


def default_roster(seed: int = 0, tab_block: str = "tab") -> list[ModelEntry]:
    """Baseline (trees on the tabular block) vs Embedding vs Deep."""
    learners = default_learners(seed)
    return [
        ModelEntry(name="Baseline", spec=learners["gbt"], modalities=(tab_block,)),
        ModelEntry(name="Embedding", spec=learners["embedding"], modalities=None),
        ModelEntry(name="Deep", spec=learners["fusion"], modalities=None),
    ]


def desk_scale_dgp(seed: int = 0, n: int = 20000, rho: float = 0.9) -> DgpConfig:
    """Three partially explainable modality channels at benchmark size."""
    return DgpConfig(
        n=n,
        theta0=0.5,
        snr=2.0,
        seed=seed,
        modality_specs=tuple(
            ModalitySpec(name=name, feature_dim=5, rho=rho, link="linear") for name in ("tab", "txt", "img")
        ),
    )
