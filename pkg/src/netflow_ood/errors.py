"""Exception types shared across the toolkit."""


class NetflowOodError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(NetflowOodError):
    """Bad configuration, bad input file, or dimension mismatch."""


class DataError(NetflowOodError):
    """Dataset content violates a precondition (empty class, missing column, ...)."""


class TrainingDivergedError(NetflowOodError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, batch, ce_loss, cl_loss):
        self.epoch = epoch
        self.batch = batch
        self.ce_loss = ce_loss
        self.cl_loss = cl_loss
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch}: "
            f"ce={ce_loss!r}, cl={cl_loss!r}"
        )


class FitError(NetflowOodError):
    """Detector fitting failed (degenerate covariance, empty class, ...)."""


class CalibrationError(NetflowOodError):
    """Threshold calibration or epsilon tuning could not proceed."""


class PersistenceError(NetflowOodError):
    """Artifact could not be read or written, or its schema version is unknown."""


class ArtifactMismatchError(NetflowOodError):
    """Artifacts were produced by incompatible runs (model fingerprint mismatch)."""
