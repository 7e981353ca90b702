"""Oracle learner: predicts the true confounding columns of the dataset.

Nothing is estimated, so its predictions are out-of-sample by definition;
it exists to give the estimation engine a noise-free upper bound and to
drive coverage simulations.
"""

from __future__ import annotations

from ..core import SemiSynthDataset
from ..errors import MissingOracleError
from .base import FittedLearner, OracleSpec


class OracleFit(FittedLearner):
    def __init__(self):
        super().__init__(tag="oracle", schema=tuple())

    def check_schema(self, ds: SemiSynthDataset):
        if ds.n == 0:
            from ..errors import SchemaMismatchError

            raise SchemaMismatchError("cannot predict on an empty dataset")
        if ds.oracle is None:
            raise MissingOracleError("oracle learner needs oracle columns")

    def _predict_arrays(self, ds: SemiSynthDataset):
        return ds.oracle.l0.copy(), ds.oracle.m0.copy()


def fit_oracle(spec: OracleSpec, train: SemiSynthDataset, modality_subset) -> OracleFit:
    if train.oracle is None:
        raise MissingOracleError("oracle learner needs oracle columns")
    return OracleFit()
