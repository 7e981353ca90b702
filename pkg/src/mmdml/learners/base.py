"""Learner specifications, the fitted-learner contract, and fit dispatch.

Every learner fits two regressions at once, one for the outcome and one for
the treatment, over a chosen subset of the dataset's modality blocks, and
predicts the pair (l_hat, m_hat) for any dataset with the same block schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import NuisancePredictions, SemiSynthDataset
from ..errors import ConfigError, SchemaMismatchError

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class RidgeSpec:
    penalty: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.penalty < 0:
            raise ConfigError("ridge penalty must be >= 0")

    kind = "ridge"


@dataclass(frozen=True)
class GbtSpec:
    trees: int = 100
    depth: int = 1
    learning_rate: float = 0.1
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.trees < 1:
            raise ConfigError("gbt needs trees >= 1")
        if self.depth < 1:
            raise ConfigError("gbt needs depth >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("gbt learning_rate must lie in (0, 1]")
        if not 0 < self.subsample <= 1:
            raise ConfigError("gbt subsample must lie in (0, 1]")

    kind = "gbt"


@dataclass(frozen=True)
class FusionArch:
    """Middle-fusion layout: per-modality encoders, a fused hidden layer,
    the embedding layer of width E, and two scalar linear heads."""

    encoder_widths: tuple[int, ...] = (16,)
    fusion_width: int = 32
    embedding_dim: int = 16
    activation: str = "relu"

    def __post_init__(self):
        if not self.encoder_widths or any(w < 1 for w in self.encoder_widths):
            raise ConfigError("need at least one encoder layer and widths must all be >= 1")
        if self.fusion_width < 1:
            raise ConfigError("fusion width must be >= 1")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class FusionSpec:
    arch: FusionArch = field(default_factory=FusionArch)
    epochs: int = 40
    batch_size: int = 256
    step_size: float = 0.05
    weight_init_scale: float = 1.0
    holdout_fraction: float = 0.2
    selection: str = "best_holdout"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("fusion training needs epochs >= 1")
        if self.batch_size < 1:
            raise ConfigError("fusion training needs batch_size >= 1")
        if self.step_size <= 0:
            raise ConfigError("fusion step_size must be > 0")
        if self.weight_init_scale <= 0:
            raise ConfigError("weight_init_scale must be > 0")
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in (0, 1)")
        if self.selection not in ("best_holdout", "last"):
            raise ConfigError("selection must be 'best_holdout' or 'last'")

    kind = "fusion"


@dataclass(frozen=True)
class EmbeddingSpec:
    """Fusion net for representation learning, boosted trees on [H_E, tab]."""

    fusion: FusionSpec = field(default_factory=FusionSpec)
    gbt: GbtSpec = field(default_factory=GbtSpec)
    tab_block: str = "tab"
    seed: int = 0

    kind = "embedding"


@dataclass(frozen=True)
class OracleSpec:
    """Test fixture: predicts the true nuisance columns."""

    seed: int = 0

    kind = "oracle"


LearnerSpec = RidgeSpec | GbtSpec | FusionSpec | EmbeddingSpec | OracleSpec


def assemble_features(ds: SemiSynthDataset, modality_subset: tuple[str, ...]) -> np.ndarray:
    """Concatenate the requested blocks into one design matrix."""
    missing = [m for m in modality_subset if m not in ds.blocks]
    if missing:
        raise SchemaMismatchError(f"dataset lacks modality blocks {missing}; has {sorted(ds.blocks)}")
    return np.hstack([ds.blocks[m] for m in modality_subset])


def schema_of(ds: SemiSynthDataset, modality_subset: tuple[str, ...]) -> tuple[tuple[str, int], ...]:
    return tuple((m, ds.blocks[m].shape[1]) for m in modality_subset)


class FittedLearner:
    """Base for fitted learners; subclasses fill in _predict_arrays."""

    def __init__(self, tag: str, schema: tuple[tuple[str, int], ...]):
        self.tag = tag
        self.schema = schema
        self.modalities = tuple(name for name, _ in schema)

    def check_schema(self, ds: SemiSynthDataset):
        if ds.n == 0:
            raise SchemaMismatchError("cannot predict on an empty dataset")
        got = tuple((m, ds.blocks[m].shape[1]) for m in self.modalities if m in ds.blocks)
        if got != self.schema:
            raise SchemaMismatchError(f"schema mismatch: fitted on {self.schema}, got {got}")

    def _predict_arrays(self, ds: SemiSynthDataset) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def predict(self, ds: SemiSynthDataset) -> NuisancePredictions:
        """Predict (l_hat, m_hat); flagged in-sample (fold_id == -1).

        The estimation engine re-wraps these arrays with true fold ids and
        an audit trail; direct calls are for inspection only.
        """
        self.check_schema(ds)
        l_hat, m_hat = self._predict_arrays(ds)
        return NuisancePredictions(
            l_hat=l_hat,
            m_hat=m_hat,
            fold_id=np.full(ds.n, -1, dtype=int),
            learner_tag=self.tag,
        )


def fit(spec: LearnerSpec, train: SemiSynthDataset, modality_subset, holdout: SemiSynthDataset | None = None) -> FittedLearner:
    """Fit the learner described by ``spec`` on ``train``.

    ``holdout`` is only consulted by the fusion learner (loss monitoring and
    epoch selection); tree and linear learners ignore it.
    """
    from . import boosting, fusion, linear, oracle

    modality_subset = tuple(modality_subset)
    if spec.kind != "oracle" and not modality_subset:
        raise ConfigError("modality_subset must be nonempty")
    if spec.kind == "ridge":
        return linear.fit_ridge(spec, train, modality_subset)
    if spec.kind == "gbt":
        return boosting.fit_gbt(spec, train, modality_subset)
    if spec.kind == "fusion":
        return fusion.fit_fusion(spec, train, modality_subset, holdout=holdout)
    if spec.kind == "embedding":
        return fusion.fit_embedding_learner(spec, train, modality_subset, holdout=holdout)
    if spec.kind == "oracle":
        return oracle.fit_oracle(spec, train, modality_subset)
    raise ConfigError(f"unknown learner kind {spec.kind!r}")


def nuisance_loss_report(preds: NuisancePredictions, ds: SemiSynthDataset) -> dict:
    """Per-head empirical RMSEs plus their oracle decompositions.

    On oracle-equipped data the triangle bounds
    ||Y - l_hat|| <= ||l0 - l_hat|| + ||Y - l0|| (and the treatment analog)
    make over/under-fitting of each head visible.
    """

    def rms(v):
        return float(np.sqrt(np.mean(np.square(v))))

    report = {
        "rmse_y": rms(ds.y - preds.l_hat),
        "rmse_d": rms(ds.d - preds.m_hat),
    }
    if ds.oracle is not None:
        report.update(
            {
                "rmse_l_vs_oracle": rms(ds.oracle.l0 - preds.l_hat),
                "rmse_m_vs_oracle": rms(ds.oracle.m0 - preds.m_hat),
                "rmse_y_oracle": rms(ds.y - ds.oracle.l0),
                "rmse_d_oracle": rms(ds.d - ds.oracle.m0),
            }
        )
    return report
