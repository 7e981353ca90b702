"""Treatment-effect estimation with multimodal confounders.

Ships a confounded semi-synthetic data generator, pluggable nuisance
learners (ridge, boosted stumps, a middle-fusion neural network trained
with a product-of-RMSE loss), an orthogonalized-score estimation engine
with split schemes and diagnostics, and a benchmark/reporting harness.
"""

from .core import (
    EffectEstimate,
    Manifest,
    ModalitySpec,
    NuisancePredictions,
    OracleColumns,
    SemiSynthDataset,
    Violation,
    load_dataset,
    save_dataset,
    validate,
)
from .dgp import (
    DgpConfig,
    OracleBounds,
    attenuated_theta_plim,
    build_confounders,
    descriptives,
    generate,
    oracle_bounds,
    standardize_target,
)
from .engine import (
    ScoreDiagnostics,
    SplitScheme,
    orthogonality_check,
    rate_diagnostic,
    repeat_splits,
    run_crossfit,
    run_split,
    score_psi,
    solve_theta,
)
from .evaluation import (
    BenchmarkReport,
    EpochTrace,
    ModelEntry,
    epoch_trace,
    ols_baseline,
    r_squared,
    relative_r2,
    run_benchmark,
)
from .learners import (
    EmbeddingSpec,
    FusionArch,
    FusionNet,
    FusionSpec,
    GbtSpec,
    OracleSpec,
    RidgeSpec,
    combined_loss,
    extract_embedding,
    fit,
    fit_embedding_model,
    train_fusion,
)

__version__ = "0.1.0"
