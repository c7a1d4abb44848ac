"""Dataset ingestion, scenario assembly, synthetic data, and persistence.

CSV ingestion maps configurable header names onto the canonical raw columns,
preprocesses them, and accounts for every dropped row. Artifacts (models,
detector profiles, ensembles, reports) are versioned JSON documents whose
floats survive a save/load round trip bit-exactly (json uses the shortest
repr that reparses to the same double).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from . import features as feat
from . import nn_core
from .detectors import DetectorProfile
from .ensemble import EnsembleConfig
from .errors import ConfigurationError, DataError, PersistenceError
from .training import Scenario

SCHEMA_VERSION = "1"


@dataclass
class Dataset:
    """Encoded records plus label metadata."""

    x: np.ndarray            # (n, d) float64, already preprocessed
    labels: np.ndarray       # (n,) class names (str)
    schema: str = feat.NETFLOW_V1.name
    provenance: str = ""
    encoded: bool = True

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=object)
        if self.x.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.x.shape[0]} records but {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def class_catalogue(self) -> list:
        return sorted({str(l) for l in self.labels})

    def subset(self, mask) -> "Dataset":
        return Dataset(
            x=self.x[mask],
            labels=self.labels[mask],
            schema=self.schema,
            provenance=self.provenance,
            encoded=self.encoded,
        )


@dataclass
class LoadReport:
    rows_total: int
    rows_parsed: int
    rows_dropped: int
    values_clamped: int


def load_raw_csv(path, columns, label_column: str, column_map: Optional[dict] = None):
    """Read a CSV, coerce the mapped columns to numbers, drop bad rows.

    ``columns`` is a sequence of (raw name, kind); ``column_map`` translates
    raw names to CSV header names (identity by default). Returns
    (raw value matrix, labels, LoadReport) with the matrix still unencoded.
    """
    column_map = column_map or {}
    frame = pd.read_csv(path)
    headers = [column_map.get(name, name) for name, _ in columns]
    label_header = column_map.get(label_column, label_column)
    missing = [h for h in headers + [label_header] if h not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}")

    total = len(frame)
    values = frame[headers].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    good = np.isfinite(values).all(axis=1)
    for j, (_, kind) in enumerate(columns):
        if kind == feat.KIND_PORT:
            good &= (values[:, j] >= 0) & (values[:, j] <= feat.PORT_MAX)
    labels = frame[label_header].astype(str).to_numpy(dtype=object)
    report = LoadReport(
        rows_total=total,
        rows_parsed=int(good.sum()),
        rows_dropped=int(total - good.sum()),
        values_clamped=0,
    )
    return values[good], labels[good], report


def load_csv(
    path,
    label_column: str = "label",
    column_map: Optional[dict] = None,
    provenance: str = "",
) -> tuple:
    """Load and preprocess a canonical-schema NetFlow CSV.

    Returns (Dataset, LoadReport).
    """
    raw, labels, report = load_raw_csv(
        path, feat.NETFLOW_V1_RAW_COLUMNS, label_column, column_map
    )
    encoded, n_clamped = feat.preprocess_records(raw)
    report.values_clamped = n_clamped
    dataset = Dataset(
        x=encoded,
        labels=labels,
        schema=feat.NETFLOW_V1.name,
        provenance=provenance or str(path),
    )
    return dataset, report


@dataclass
class ScenarioPools:
    """Training pool (relabeled) and the held-out unknown-attack pool."""

    train_x: np.ndarray
    train_y: np.ndarray          # ints in the scenario's label space
    class_names: list
    unknown: Dataset             # original attack names preserved
    benign_name: str


def assemble_scenario(dataset: Dataset, scenario: Scenario) -> ScenarioPools:
    """Split a dataset into the scenario's training pool and unknown attacks."""
    if not dataset.encoded:
        raise DataError("dataset must be preprocessed before scenario assembly")
    catalogue = set(dataset.class_catalogue)
    wanted = [scenario.benign] + list(scenario.attacks)
    absent = [c for c in wanted if c not in catalogue]
    if absent:
        raise DataError(f"scenario classes missing from dataset: {absent}")

    labels = dataset.labels.astype(str)
    train_mask = np.isin(labels, wanted)
    unknown_mask = ~train_mask & (labels != scenario.benign)

    if scenario.mode == "binary":
        train_y = np.where(labels[train_mask] == scenario.benign, 0, 1)
    else:
        index = {name: i for i, name in enumerate(wanted)}
        train_y = np.array([index[l] for l in labels[train_mask]], dtype=np.intp)

    return ScenarioPools(
        train_x=dataset.x[train_mask],
        train_y=np.asarray(train_y, dtype=np.intp),
        class_names=scenario.train_class_names,
        unknown=dataset.subset(unknown_mask),
        benign_name=scenario.benign,
    )


@dataclass
class Blob:
    """One Gaussian cluster: a class name, a mean, a spread, a count."""

    name: str
    mean: np.ndarray
    count: int
    sigma: float = 1.0                     # isotropic std when cov is None
    cov: Optional[np.ndarray] = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        if self.count <= 0:
            raise ConfigurationError(f"blob {self.name!r} count must be > 0")
        if self.cov is not None:
            self.cov = np.asarray(self.cov, dtype=np.float64)
            if np.linalg.eigvalsh(self.cov).min() <= 0:
                raise ConfigurationError(f"blob {self.name!r} covariance not PD")
        elif self.sigma <= 0:
            raise ConfigurationError(f"blob {self.name!r} sigma must be > 0")


@dataclass
class SyntheticSpec:
    id_blobs: list
    ood_blobs: list = field(default_factory=list)
    seed: int = 0
    dim: int = nn_core.INPUT_DIM


def _sample_blob(blob: Blob, dim: int, rng: np.random.Generator) -> np.ndarray:
    mean = np.zeros(dim)
    mean[: blob.mean.size] = blob.mean
    noise = rng.standard_normal((blob.count, dim))
    if blob.cov is not None:
        chol = np.zeros((dim, dim))
        k = blob.cov.shape[0]
        chol[:k, :k] = np.linalg.cholesky(blob.cov)
        chol[k:, k:] = np.eye(dim - k) * blob.sigma
        return mean + noise @ chol.T
    return mean + blob.sigma * noise


def generate_synthetic(spec: SyntheticSpec) -> tuple:
    """Seeded Gaussian sampling; returns (ID Dataset, OOD Dataset)."""
    rng = np.random.default_rng(spec.seed)

    def build(blobs, tag):
        xs, names = [], []
        for blob in blobs:
            xs.append(_sample_blob(blob, spec.dim, rng))
            names.extend([blob.name] * blob.count)
        x = np.vstack(xs) if xs else np.empty((0, spec.dim))
        return Dataset(
            x=x, labels=np.array(names, dtype=object),
            schema=f"synthetic-{spec.dim}d", provenance=tag,
        )

    return build(spec.id_blobs, "synthetic-id"), build(spec.ood_blobs, "synthetic-ood")


# ---------------------------------------------------------------------------
# persistence


def _arr_to_doc(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _doc_to_arr(doc) -> np.ndarray:
    try:
        return np.array(doc["data"], dtype=np.float64).reshape(doc["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PersistenceError(f"malformed array field: {exc}") from exc


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_document(path, kind: str, payload: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind}
    doc.update(payload)
    atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_document(path, kind: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise PersistenceError(
            f"{path}: schema version {version!r} but this build reads {SCHEMA_VERSION!r}"
        )
    if doc.get("kind") != kind:
        raise PersistenceError(f"{path}: expected kind {kind!r}, found {doc.get('kind')!r}")
    return doc


def model_fingerprint(model: nn_core.FnnModel) -> str:
    """Stable short hash of the architecture metadata and every parameter."""
    h = hashlib.sha256()
    h.update(
        f"{model.regime}|{model.n_classes}|{model.leaky_slope}|{model.dropout_p}".encode()
    )
    for layer in model.layers():
        h.update(layer.weights.tobytes())
        h.update(layer.bias.tobytes())
    return h.hexdigest()[:16]


def save_model(path, model: nn_core.FnnModel) -> None:
    payload = {
        "regime": model.regime,
        "cl_trained": model.cl_trained,
        "seed": model.seed,
        "leaky_slope": model.leaky_slope,
        "dropout_p": model.dropout_p,
        "class_names": list(model.class_names),
        "layers": [
            {"weights": _arr_to_doc(l.weights), "bias": _arr_to_doc(l.bias)}
            for l in model.layers()
        ],
        "fingerprint": model_fingerprint(model),
    }
    save_document(path, "fnn_model", payload)


def load_model(path) -> nn_core.FnnModel:
    doc = load_document(path, "fnn_model")
    try:
        layers = [
            nn_core.LayerParams(_doc_to_arr(l["weights"]), _doc_to_arr(l["bias"]))
            for l in doc["layers"]
        ]
        model = nn_core.FnnModel(
            encoder=layers[:-1],
            classifier=layers[-1],
            regime=doc["regime"],
            cl_trained=doc["cl_trained"],
            seed=doc["seed"],
            leaky_slope=doc["leaky_slope"],
            dropout_p=doc["dropout_p"],
            class_names=list(doc["class_names"]),
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise PersistenceError(f"{path}: malformed model document: {exc}") from exc
    stored = doc.get("fingerprint")
    actual = model_fingerprint(model)
    if stored != actual:
        raise PersistenceError(
            f"{path}: fingerprint {stored!r} does not match parameters ({actual!r})"
        )
    return model


def save_profile(path, profile: DetectorProfile) -> None:
    state = {}
    for key, value in profile.state.items():
        if key == "stores":
            state["stores"] = {str(c): _arr_to_doc(a) for c, a in value.items()}
        elif isinstance(value, np.ndarray):
            state[key] = _arr_to_doc(value)
        else:
            state[key] = value
    payload = {
        "detector": profile.kind,
        "direction": profile.direction,
        "threshold": profile.threshold,
        "model_fingerprint": profile.model_fingerprint,
        "regime_tag": profile.regime_tag,
        "state": state,
    }
    save_document(path, "detector_profile", payload)


_PROFILE_ARRAY_KEYS = {"means", "covariance", "centers"}


def load_profile(path) -> DetectorProfile:
    doc = load_document(path, "detector_profile")
    try:
        state = {}
        for key, value in doc["state"].items():
            if key == "stores":
                state["stores"] = {int(c): _doc_to_arr(a) for c, a in value.items()}
            elif key in _PROFILE_ARRAY_KEYS:
                state[key] = _doc_to_arr(value)
            else:
                state[key] = value
        return DetectorProfile(
            kind=doc["detector"],
            direction=doc["direction"],
            threshold=doc["threshold"],
            state=state,
            model_fingerprint=doc["model_fingerprint"],
            regime_tag=doc["regime_tag"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PersistenceError(f"{path}: malformed profile document: {exc}") from exc


def save_ensemble(path, config: EnsembleConfig) -> None:
    payload = {
        "name": config.name,
        "policy": config.policy,
        "members": [[kind, tag] for kind, tag in config.members],
    }
    save_document(path, "ensemble_config", payload)


def load_ensemble(path) -> EnsembleConfig:
    doc = load_document(path, "ensemble_config")
    try:
        return EnsembleConfig(
            name=doc["name"],
            members=[tuple(m) for m in doc["members"]],
            policy=doc["policy"],
        )
    except (KeyError, TypeError) as exc:
        raise PersistenceError(f"{path}: malformed ensemble document: {exc}") from exc


def save_report(path, report: dict) -> None:
    save_document(path, "eval_report", report)


def load_report(path) -> dict:
    return load_document(path, "eval_report")
