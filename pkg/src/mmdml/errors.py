"""Exception hierarchy shared across the package."""


class MmdmlError(Exception):
    """Base class for all package errors."""


class ConfigError(MmdmlError):
    """Malformed or inconsistent configuration."""


class DataValidationError(MmdmlError):
    """A dataset violated its structural invariants.

    Carries the violation list so callers can report every defect at once.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"dataset failed validation: {lines}{more}")


class DegenerateTargetError(MmdmlError):
    """A target or confounder vector has zero variance and cannot be scaled."""


class SchemaMismatchError(MmdmlError):
    """Prediction-time data does not match the schema the learner was fit on."""


class MissingOracleError(MmdmlError):
    """An operation requiring oracle columns was called on a dataset without them."""


class IdentificationError(MmdmlError):
    """Residual treatment variation is too weak to identify the effect."""


class InSamplePredictionError(MmdmlError):
    """Predictions flagged as in-sample (fold_id == -1) were passed to the estimator."""


class TrainingDivergedError(MmdmlError):
    """Neural-network training produced a non-finite loss."""

    def __init__(self, epoch, message="training diverged (non-finite loss)"):
        self.epoch = epoch
        super().__init__(f"{message} at epoch {epoch}")
