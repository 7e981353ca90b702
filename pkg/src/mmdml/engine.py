"""Orthogonalized-score estimation of the treatment coefficient.

The estimating score is
    psi(w, theta, eta) = (y - l_hat - theta * (d - m_hat)) * (d - m_hat),
affine in theta, so the empirical moment equation has the unique root
    theta_hat = sum((y - l_hat)(d - m_hat)) / sum((d - m_hat)^2).
The variance is the plug-in sandwich J^-2 * mean(psi^2) with
J = mean((d - m_hat)^2) and no degrees-of-freedom correction.

Split schemes: a single train/test split (the default protocol for the
neural learners), K-fold cross-fitting with pooled out-of-fold scores,
and repeated splits with mean +/- sd aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .core import EffectEstimate, NuisancePredictions, SemiSynthDataset, require_valid
from .errors import ConfigError, IdentificationError, InSamplePredictionError, MissingOracleError
from .learners import fit as fit_learner
from .rng import substream

IDENTIFICATION_RTOL = 1e-8


@dataclass(frozen=True)
class SplitScheme:
    kind: str = "single"
    train_fraction: float = 0.5
    k: int = 5
    repeats: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("single", "kfold"):
            raise ConfigError("split kind must be 'single' or 'kfold'")
        if self.kind == "single" and not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.kind == "kfold" and self.k < 2:
            raise ConfigError("kfold needs k >= 2")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    def describe(self) -> dict:
        if self.kind == "single":
            return {"kind": "single", "train_fraction": self.train_fraction, "repeats": self.repeats, "seed": self.seed}
        return {"kind": "kfold", "k": self.k, "repeats": self.repeats, "seed": self.seed}


@dataclass(frozen=True)
class ScoreDiagnostics:
    psi_mean: float
    psi_var: float
    orth_deriv_l: float | None = None
    orth_deriv_m: float | None = None
    rate_product: float | None = None

    def to_dict(self) -> dict:
        return {
            "psi_mean": self.psi_mean,
            "psi_var": self.psi_var,
            "orth_deriv_l": self.orth_deriv_l,
            "orth_deriv_m": self.orth_deriv_m,
            "rate_product": self.rate_product,
        }


def score_psi(y, d, l_hat, m_hat, theta: float) -> np.ndarray:
    """Elementwise orthogonalized score values."""
    y, d, l_hat, m_hat = (np.asarray(v, dtype=float) for v in (y, d, l_hat, m_hat))
    resid_d = d - m_hat
    return (y - l_hat - theta * resid_d) * resid_d


def z_quantile(alpha: float) -> float:
    """Two-sided normal critical value z_{1 - alpha/2}."""
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    return float(ndtri(1.0 - alpha / 2.0))


def solve_theta(preds: NuisancePredictions, y, d, alpha: float = 0.05, allow_in_sample: bool = False) -> EffectEstimate:
    """Solve the empirical moment equation and attach the sandwich CI."""
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    if len(y) != len(preds.l_hat) or len(d) != len(preds.l_hat):
        raise ConfigError("predictions and observations must have equal length")
    if not allow_in_sample and (preds.fold_id < 0).any():
        raise InSamplePredictionError(
            "predictions contain fold_id = -1 rows; refit through a split scheme or pass allow_in_sample=True"
        )
    n = len(y)
    resid_d = d - preds.m_hat
    resid_y = y - preds.l_hat
    denom = float(np.mean(resid_d**2))
    var_d = float(np.var(d))
    if denom < IDENTIFICATION_RTOL * max(var_d, 1e-12):
        raise IdentificationError(
            f"residual treatment variation {denom:.3e} is below tolerance; m_hat nearly reproduces d"
        )
    theta_hat = float(np.sum(resid_y * resid_d) / np.sum(resid_d**2))
    psi = score_psi(y, d, preds.l_hat, preds.m_hat, theta_hat)
    sigma2 = float(np.mean(psi**2) / denom**2)
    se = float(np.sqrt(sigma2 / n))
    z = z_quantile(alpha)
    return EffectEstimate(
        theta_hat=theta_hat,
        se=se,
        ci_low=theta_hat - z * se,
        ci_high=theta_hat + z * se,
        alpha=alpha,
        n_used=n,
        score_mean=float(np.mean(psi)),
        denom=denom,
    )


@dataclass(frozen=True)
class SplitResult:
    """One estimation run: estimate, diagnostics, and evaluation extras."""

    estimate: EffectEstimate
    diagnostics: ScoreDiagnostics
    preds: NuisancePredictions
    test_idx: np.ndarray
    learner: object
    r2_y_rel: float | None = None
    r2_d_rel: float | None = None


def _split_indices(n: int, train_fraction: float, seed: int, label: str) -> tuple[np.ndarray, np.ndarray]:
    rng = substream(seed, "split", label)
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise ConfigError(f"split leaves an empty side (n={n}, train_fraction={train_fraction})")
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _relative_r2_pair(ds_test: SemiSynthDataset, preds: NuisancePredictions):
    """Relative r2 on the evaluation rows, against oracle bounds on the same rows."""
    from .evaluation import r_squared, relative_r2

    if ds_test.oracle is None:
        return None, None
    r2_y_o = r_squared(ds_test.y, ds_test.oracle.l0)
    r2_d_o = r_squared(ds_test.d, ds_test.oracle.m0)
    return (
        relative_r2(ds_test.y, preds.l_hat, r2_y_o),
        relative_r2(ds_test.d, preds.m_hat, r2_d_o),
    )


def run_split(
    ds: SemiSynthDataset,
    learner_spec,
    scheme: SplitScheme,
    modality_subset=None,
    alpha: float = 0.05,
    split_label: str = "0",
) -> SplitResult:
    """Fit on the train half, estimate on the disjoint test half."""
    require_valid(ds)
    modality_subset = _resolve_subset(ds, learner_spec, modality_subset)
    train_idx, test_idx = _split_indices(ds.n, scheme.train_fraction, scheme.seed, split_label)
    ds_train = ds.take(train_idx)
    ds_test = ds.take(test_idx)
    learner = fit_learner(learner_spec, ds_train, modality_subset, holdout=ds_test)
    raw = learner.predict(ds_test)
    preds = NuisancePredictions(
        l_hat=raw.l_hat,
        m_hat=raw.m_hat,
        fold_id=np.zeros(ds_test.n, dtype=int),
        learner_tag=raw.learner_tag,
        audit={0: (train_idx, test_idx)},
    )
    estimate = solve_theta(preds, ds_test.y, ds_test.d, alpha=alpha)
    psi = score_psi(ds_test.y, ds_test.d, preds.l_hat, preds.m_hat, estimate.theta_hat)
    rate = None
    if ds_test.oracle is not None:
        rate = rate_diagnostic(preds, ds_test.oracle, ds_test.n)
    diagnostics = ScoreDiagnostics(psi_mean=float(np.mean(psi)), psi_var=float(np.var(psi)), rate_product=rate)
    r2_y_rel, r2_d_rel = _relative_r2_pair(ds_test, preds)
    return SplitResult(
        estimate=estimate,
        diagnostics=diagnostics,
        preds=preds,
        test_idx=test_idx,
        learner=learner,
        r2_y_rel=r2_y_rel,
        r2_d_rel=r2_d_rel,
    )


def run_crossfit(
    ds: SemiSynthDataset,
    learner_spec,
    scheme: SplitScheme,
    modality_subset=None,
    alpha: float = 0.05,
    split_label: str = "0",
) -> SplitResult:
    """K-fold cross-fitting: pool out-of-fold predictions, solve once."""
    require_valid(ds)
    if scheme.k > ds.n // 2:
        raise ConfigError(f"k={scheme.k} too large for n={ds.n}")
    modality_subset = _resolve_subset(ds, learner_spec, modality_subset)
    rng = substream(scheme.seed, "kfold", split_label)
    perm = rng.permutation(ds.n)
    folds = np.array_split(perm, scheme.k)
    l_hat = np.empty(ds.n)
    m_hat = np.empty(ds.n)
    fold_id = np.empty(ds.n, dtype=int)
    audit = {}
    for fid, fold in enumerate(folds):
        fold = np.sort(fold)
        train_idx = np.sort(np.setdiff1d(perm, fold, assume_unique=True))
        learner = fit_learner(learner_spec, ds.take(train_idx), modality_subset)
        raw = learner.predict(ds.take(fold))
        l_hat[fold] = raw.l_hat
        m_hat[fold] = raw.m_hat
        fold_id[fold] = fid
        audit[fid] = (train_idx, fold)
    preds = NuisancePredictions(l_hat=l_hat, m_hat=m_hat, fold_id=fold_id, learner_tag=f"crossfit[{scheme.k}]", audit=audit)
    estimate = solve_theta(preds, ds.y, ds.d, alpha=alpha)
    psi = score_psi(ds.y, ds.d, l_hat, m_hat, estimate.theta_hat)
    rate = rate_diagnostic(preds, ds.oracle, ds.n) if ds.oracle is not None else None
    diagnostics = ScoreDiagnostics(psi_mean=float(np.mean(psi)), psi_var=float(np.var(psi)), rate_product=rate)
    r2_y_rel, r2_d_rel = _relative_r2_pair(ds, preds)
    return SplitResult(
        estimate=estimate,
        diagnostics=diagnostics,
        preds=preds,
        test_idx=np.arange(ds.n),
        learner=None,
        r2_y_rel=r2_y_rel,
        r2_d_rel=r2_d_rel,
    )


@dataclass(frozen=True)
class RepeatSummary:
    """Per-repeat results plus mean/sd aggregates over the repeats."""

    results: tuple[SplitResult, ...]
    theta_mean: float
    theta_sd: float
    r2_y_rel_mean: float | None
    r2_y_rel_sd: float | None
    r2_d_rel_mean: float | None
    r2_d_rel_sd: float | None

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.estimate.theta_hat for r in self.results])

    def to_dict(self) -> dict:
        return {
            "theta_mean": self.theta_mean,
            "theta_sd": self.theta_sd,
            "r2_y_rel_mean": self.r2_y_rel_mean,
            "r2_y_rel_sd": self.r2_y_rel_sd,
            "r2_d_rel_mean": self.r2_d_rel_mean,
            "r2_d_rel_sd": self.r2_d_rel_sd,
            "repeats": [
                {
                    **r.estimate.to_dict(),
                    "r2_y_rel": r.r2_y_rel,
                    "r2_d_rel": r.r2_d_rel,
                    "diagnostics": r.diagnostics.to_dict(),
                }
                for r in self.results
            ],
        }


def repeat_splits(
    ds: SemiSynthDataset,
    learner_spec,
    scheme: SplitScheme,
    modality_subset=None,
    alpha: float = 0.05,
    repeat_labels=None,
) -> RepeatSummary:
    """Run the scheme ``scheme.repeats`` times with distinct split streams."""
    if scheme.repeats < 2:
        raise ConfigError("repeat_splits needs repeats >= 2")
    labels = [str(r) for r in range(scheme.repeats)] if repeat_labels is None else [str(x) for x in repeat_labels]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"repeat labels must be distinct, got {labels}")
    runner = run_split if scheme.kind == "single" else run_crossfit
    results = tuple(
        runner(ds, learner_spec, scheme, modality_subset=modality_subset, alpha=alpha, split_label=label)
        for label in labels
    )
    thetas = np.array([r.estimate.theta_hat for r in results])

    def agg(values):
        if any(v is None for v in values):
            return None, None
        arr = np.array(values, dtype=float)
        return float(arr.mean()), float(arr.std(ddof=1))

    r2y_mean, r2y_sd = agg([r.r2_y_rel for r in results])
    r2d_mean, r2d_sd = agg([r.r2_d_rel for r in results])
    return RepeatSummary(
        results=results,
        theta_mean=float(thetas.mean()),
        theta_sd=float(thetas.std(ddof=1)),
        r2_y_rel_mean=r2y_mean,
        r2_y_rel_sd=r2y_sd,
        r2_d_rel_mean=r2d_mean,
        r2_d_rel_sd=r2d_sd,
    )


def _resolve_subset(ds: SemiSynthDataset, learner_spec, modality_subset):
    if modality_subset is not None:
        return tuple(modality_subset)
    if getattr(learner_spec, "kind", None) == "oracle":
        return tuple()
    return tuple(name for name in (s.name for s in ds.manifest.modality_specs) if name in ds.blocks)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def orthogonality_check(
    ds: SemiSynthDataset,
    t: float = 0.1,
    seed: int = 0,
    direction: str = "nuisance",
    score: str = "orthogonal",
) -> tuple[float, float]:
    """Central-difference Gateaux derivatives of the mean score at (theta0, eta0).

    Perturbs each nuisance in a fixed direction delta of unit empirical RMS:
    with ``direction='nuisance'`` the deltas are the (normalized) true
    nuisance functions themselves, the directions along which fitted learners
    actually err; ``direction='random'`` uses a seeded uniform(-1, 1) vector,
    which is orthogonal to everything in expectation and therefore useless as
    a negative control.  ``score='naive'`` swaps in the non-orthogonalized
    score (y - l - theta (d - m)) * d.
    """
    if ds.oracle is None:
        raise MissingOracleError("orthogonality check needs oracle columns")
    if t <= 0:
        raise ConfigError("perturbation scale t must be > 0")
    if direction not in ("nuisance", "random"):
        raise ConfigError("direction must be 'nuisance' or 'random'")
    if score not in ("orthogonal", "naive"):
        raise ConfigError("score must be 'orthogonal' or 'naive'")
    oc = ds.oracle
    theta0 = ds.manifest.theta0

    def rms(v):
        return np.sqrt(np.mean(v**2))

    if direction == "nuisance":
        delta_l = oc.l0 / max(rms(oc.l0), 1e-12)
        delta_m = oc.m0 / max(rms(oc.m0), 1e-12)
    else:
        rng = substream(seed, "orthogonality")
        delta_l = rng.uniform(-1.0, 1.0, size=ds.n)
        delta_m = rng.uniform(-1.0, 1.0, size=ds.n)

    def mean_score(l_hat, m_hat):
        if score == "orthogonal":
            return float(np.mean(score_psi(ds.y, ds.d, l_hat, m_hat, theta0)))
        return float(np.mean((ds.y - l_hat - theta0 * (ds.d - m_hat)) * ds.d))

    deriv_l = (mean_score(oc.l0 + t * delta_l, oc.m0) - mean_score(oc.l0 - t * delta_l, oc.m0)) / (2 * t)
    deriv_m = (mean_score(oc.l0, oc.m0 + t * delta_m) - mean_score(oc.l0, oc.m0 - t * delta_m)) / (2 * t)
    return deriv_l, deriv_m


def rate_diagnostic(preds: NuisancePredictions, oracle, n: int) -> float:
    """sqrt(n)-scaled product of nuisance estimation errors.

    Reported, never enforced: values that shrink as n grows are consistent
    with the convergence-rate requirement for valid plug-in inference.
    """
    if oracle is None:
        raise MissingOracleError("rate diagnostic needs oracle columns")
    err_m = float(np.sqrt(np.mean((preds.m_hat - oracle.m0) ** 2)))
    err_l = float(np.sqrt(np.mean((preds.l_hat - oracle.l0) ** 2)))
    return err_m * (err_m + err_l) * float(np.sqrt(n))
