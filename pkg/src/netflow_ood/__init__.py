"""Out-of-distribution detection toolkit for NetFlow intrusion classifiers.

Train a small feedforward classifier under four regimes (binary/multiclass,
with/without a center-pull embedding loss), fit and calibrate six OOD
detectors around it, combine them into union ensembles, and evaluate how much
unknown-attack traffic gets rejected.
"""

from . import data_io, detectors, ensemble, evaluation, features, nn_core, training
from .data_io import Blob, Dataset, SyntheticSpec, generate_synthetic, load_csv
from .detectors import DetectorProfile, calibrate_threshold, fit_profile, tune_odin_md
from .ensemble import EnsembleConfig, build_ens1, build_ens2
from .errors import (
    ArtifactMismatchError,
    CalibrationError,
    ConfigurationError,
    DataError,
    FitError,
    NetflowOodError,
    PersistenceError,
    TrainingDivergedError,
)
from .evaluation import EvalReport, compute_metrics, score_dataset
from .features import NETFLOW_V1, cross_dataset_select, select_on_dataset
from .nn_core import FnnModel, forward, init_model, softmax
from .training import Scenario, TrainConfig, stratified_split, train, validation_f1

__version__ = "0.1.0"
