"""Ridge regression nuisance learner (closed form, unpenalized intercept)."""

from __future__ import annotations

import numpy as np

from ..core import SemiSynthDataset
from .base import FittedLearner, RidgeSpec, assemble_features, schema_of


def _ridge_solve(x: np.ndarray, t: np.ndarray, penalty: float) -> tuple[np.ndarray, float]:
    """Return (coef, intercept) minimizing ||t - b0 - x b||^2 + penalty ||b||^2."""
    xm = x.mean(axis=0)
    tm = t.mean()
    xc = x - xm
    tc = t - tm
    gram = xc.T @ xc + penalty * np.eye(x.shape[1])
    rhs = xc.T @ tc
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        coef, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    return coef, float(tm - xm @ coef)


class RidgeFit(FittedLearner):
    def __init__(self, spec: RidgeSpec, schema, coef_l, int_l, coef_m, int_m):
        super().__init__(tag=f"ridge(penalty={spec.penalty:g})", schema=schema)
        self.spec = spec
        self.coef_l, self.int_l = coef_l, int_l
        self.coef_m, self.int_m = coef_m, int_m

    def _predict_arrays(self, ds: SemiSynthDataset):
        x = assemble_features(ds, self.modalities)
        return x @ self.coef_l + self.int_l, x @ self.coef_m + self.int_m


def fit_ridge(spec: RidgeSpec, train: SemiSynthDataset, modality_subset) -> RidgeFit:
    x = assemble_features(train, modality_subset)
    coef_l, int_l = _ridge_solve(x, train.y, spec.penalty)
    coef_m, int_m = _ridge_solve(x, train.d, spec.penalty)
    return RidgeFit(spec, schema_of(train, modality_subset), coef_l, int_l, coef_m, int_m)
