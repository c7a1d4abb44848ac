"""NetFlow feature schema, preprocessing, and random-forest feature selection.

Preprocessing: continuous features are log-scaled with ln(1+x) (several are
legitimately zero), integer counts pass through unaltered, and the destination
port becomes two one-hot flags (well-known / registered; ephemeral ports set
neither). Selection is a four-step procedure per dataset: drop quasi-constant
features, drop one of each highly correlated pair, fit a large random forest,
and rank features by the normalized sum of Gini and permutation importance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .errors import ConfigurationError, DataError, FitError
from .training import stratified_split

logger = logging.getLogger(__name__)

WELL_KNOWN_MAX = 1023
REGISTERED_MAX = 49151
PORT_MAX = 65535

KIND_CONTINUOUS = "continuous"
KIND_INTEGER = "integer"
KIND_PORT_FLAG = "port-flag"
KIND_PORT = "port"  # raw column that expands into the two flags


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    kind: str


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered list of encoded feature descriptors."""

    name: str
    features: tuple

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigurationError("feature names must be unique")

    @property
    def feature_names(self) -> list:
        return [f.name for f in self.features]

    @property
    def width(self) -> int:
        return len(self.features)

    def index(self, name: str) -> int:
        return self.feature_names.index(name)


# Canonical encoded schema: 20 features, printed order.
NETFLOW_V1 = FeatureSchema(
    name="netflow-v1",
    features=(
        FeatureDescriptor("dst_wk", KIND_PORT_FLAG),
        FeatureDescriptor("dst_reg", KIND_PORT_FLAG),
        FeatureDescriptor("num_fwd_pkts", KIND_INTEGER),
        FeatureDescriptor("num_bwd_pkts", KIND_INTEGER),
        FeatureDescriptor("max_fwd_pkt", KIND_INTEGER),
        FeatureDescriptor("max_bwd_pkt", KIND_INTEGER),
        FeatureDescriptor("ack_cnt", KIND_INTEGER),
        FeatureDescriptor("syn_cnt", KIND_INTEGER),
        FeatureDescriptor("rst_cnt", KIND_INTEGER),
        FeatureDescriptor("duration", KIND_CONTINUOUS),
        FeatureDescriptor("pkts_per_s", KIND_CONTINUOUS),
        FeatureDescriptor("fwd_pkts_per_s", KIND_CONTINUOUS),
        FeatureDescriptor("bwd_pkts_per_s", KIND_CONTINUOUS),
        FeatureDescriptor("avg_iat", KIND_CONTINUOUS),
        FeatureDescriptor("std_iat", KIND_CONTINUOUS),
        FeatureDescriptor("sflow_fwd_byts", KIND_CONTINUOUS),
        FeatureDescriptor("sflow_bwd_byts", KIND_CONTINUOUS),
        FeatureDescriptor("avg_idle", KIND_CONTINUOUS),
        FeatureDescriptor("avg_active", KIND_CONTINUOUS),
        FeatureDescriptor("fwd_seg_min", KIND_INTEGER),
    ),
)

# Raw columns a NetFlow CSV must provide for the canonical schema: the port
# column expands into (dst_wk, dst_reg), everything else maps one to one.
NETFLOW_V1_RAW_COLUMNS = (("dst_port", KIND_PORT),) + tuple(
    (f.name, f.kind) for f in NETFLOW_V1.features if f.kind != KIND_PORT_FLAG
)


def port_flags(port) -> tuple:
    """(well_known, registered) flags for a destination port."""
    port = int(port)
    if not (0 <= port <= PORT_MAX):
        raise DataError(f"port {port} outside [0, {PORT_MAX}]")
    if port <= WELL_KNOWN_MAX:
        return 1.0, 0.0
    if port <= REGISTERED_MAX:
        return 0.0, 1.0
    return 0.0, 0.0


def log_scale(values: np.ndarray) -> tuple:
    """ln(1+x) with negatives clamped to 0 first; returns (scaled, n_clamped)."""
    values = np.asarray(values, dtype=np.float64)
    negative = values < 0.0
    n_clamped = int(negative.sum())
    return np.log1p(np.where(negative, 0.0, values)), n_clamped


def encode_columns(values: np.ndarray, columns) -> tuple:
    """Encode raw columns into the model's numeric feature space.

    ``columns`` is a sequence of (name, kind) with kind in {continuous,
    integer, port}. Port columns expand into two flag columns. Returns
    (matrix, encoded names, encoded kinds, clamp count).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != len(columns):
        raise ConfigurationError(
            f"expected {len(columns)} raw columns, got shape {values.shape}"
        )
    if not np.isfinite(values).all():
        raise DataError("raw values must be finite numbers")
    out_cols, out_names, out_kinds = [], [], []
    n_clamped = 0
    for j, (name, kind) in enumerate(columns):
        col = values[:, j]
        if kind == KIND_PORT:
            flags = np.array([port_flags(p) for p in col], dtype=np.float64)
            flags = flags.reshape(col.size, 2)
            out_cols.extend([flags[:, 0], flags[:, 1]])
            out_names.extend([f"{name}_wk_flag", f"{name}_reg_flag"])
            out_kinds.extend([KIND_PORT_FLAG, KIND_PORT_FLAG])
        elif kind == KIND_CONTINUOUS:
            scaled, clamped = log_scale(col)
            n_clamped += clamped
            out_cols.append(scaled)
            out_names.append(name)
            out_kinds.append(KIND_CONTINUOUS)
        elif kind == KIND_INTEGER:
            out_cols.append(col.copy())
            out_names.append(name)
            out_kinds.append(KIND_INTEGER)
        else:
            raise ConfigurationError(f"unknown raw column kind {kind!r} for {name!r}")
    if n_clamped:
        logger.warning("clamped %d negative continuous values to 0", n_clamped)
    return np.column_stack(out_cols), out_names, out_kinds, n_clamped


def preprocess_records(raw: np.ndarray) -> tuple:
    """Encode raw canonical-schema rows (port first, then 18 numerics).

    Returns (n x 20 matrix in NETFLOW_V1 order, clamp count).
    """
    matrix, names, _, n_clamped = encode_columns(raw, NETFLOW_V1_RAW_COLUMNS)
    # the port expansion lands first, so the encoded order is already canonical
    assert len(names) == NETFLOW_V1.width
    return matrix, n_clamped


def variance_filter(x: np.ndarray, min_variance: float = 0.05) -> np.ndarray:
    """Indices of features whose population variance is at least the floor."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        raise DataError("variance filter needs at least 2 records")
    variances = x.var(axis=0)
    return np.flatnonzero(variances >= min_variance)


def correlation_dedup(
    x: np.ndarray, retained: np.ndarray, threshold: float = 0.8
) -> np.ndarray:
    """Greedy pass in schema order dropping the later of any |rho|>threshold pair.

    Zero-variance columns are excluded from the correlation computation and
    are never dropped here.
    """
    retained = np.asarray(retained, dtype=np.intp)
    sub = np.asarray(x, dtype=np.float64)[:, retained]
    stds = sub.std(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(sub, rowvar=False)
    if corr.ndim == 0:  # single feature
        return retained
    corr = np.nan_to_num(corr, nan=0.0)
    corr[stds == 0.0, :] = 0.0
    corr[:, stds == 0.0] = 0.0
    keep = np.ones(retained.size, dtype=bool)
    for i in range(retained.size):
        if not keep[i]:
            continue
        too_close = np.abs(corr[i, i + 1 :]) > threshold
        keep[i + 1 :] &= ~too_close
    return retained[keep]


@dataclass
class FittedForest:
    """A seeded random forest plus the data shape it was fitted on."""

    model: RandomForestClassifier
    n_features: int
    classes: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Majority vote over the individual trees (ties to the smaller class)."""
        x = np.asarray(x, dtype=np.float64)
        votes = np.stack([est.predict(x) for est in self.model.estimators_])
        out = np.empty(x.shape[0], dtype=self.classes.dtype)
        for i in range(x.shape[0]):
            vals, counts = np.unique(votes[:, i], return_counts=True)
            out[i] = vals[counts.argmax()]  # unique is sorted, argmax takes first
        return out

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(x) == np.asarray(y)))


def fit_random_forest(
    x: np.ndarray, y: np.ndarray, trees: int = 200, max_depth: int = 20, seed: int = 0
) -> FittedForest:
    """Bootstrap forest with sqrt(d) split candidates and Gini criterion."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if np.unique(y).size < 2:
        raise FitError("random forest needs at least two classes")
    model = RandomForestClassifier(
        n_estimators=trees,
        max_depth=max_depth,
        max_features="sqrt",
        criterion="gini",
        bootstrap=True,
        random_state=seed,
        n_jobs=1,
    )
    model.fit(x, y)
    return FittedForest(model=model, n_features=x.shape[1], classes=model.classes_)


@dataclass
class ImportanceRanking:
    """Per-feature importances and the derived rank order."""

    feature_names: list
    gini: np.ndarray               # normalized to sum 1
    permutation: np.ndarray        # normalized to sum 1
    raw_permutation_drop: np.ndarray
    combined: np.ndarray           # gini + permutation
    order: np.ndarray              # feature indices, best first

    def top(self, n: int) -> list:
        return [self.feature_names[i] for i in self.order[:n]]

    def rows(self) -> list:
        """(name, gini, permutation, combined, rank) per feature, best first."""
        return [
            (
                self.feature_names[i],
                float(self.gini[i]),
                float(self.permutation[i]),
                float(self.combined[i]),
                rank + 1,
            )
            for rank, i in enumerate(self.order)
        ]


def _normalize(v: np.ndarray) -> np.ndarray:
    total = v.sum()
    if total <= 0.0:
        return np.full_like(v, 1.0 / v.size)
    return v / total


def importance(
    forest: FittedForest,
    x_val: np.ndarray,
    y_val: np.ndarray,
    feature_names: Optional[list] = None,
    permutations: int = 10,
    seed: int = 0,
) -> ImportanceRanking:
    """Gini + permutation importance on held-out data.

    Gini importance is the forest's mean impurity decrease per feature,
    normalized to sum 1. Permutation importance is the mean accuracy drop over
    seeded shuffles of each column, floored at 0 and normalized to sum 1 (an
    all-zero vector falls back to uniform so both vectors always sum to 1).
    Ranking is by the sum of the two, ties broken by schema order.
    """
    x_val = np.asarray(x_val, dtype=np.float64)
    y_val = np.asarray(y_val)
    d = forest.n_features
    if x_val.shape[1] != d:
        raise ConfigurationError("validation data does not match the fitted forest")
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(d)]

    gini = _normalize(np.asarray(forest.model.feature_importances_, dtype=np.float64))

    rng = np.random.default_rng([seed, 0x1339])
    base_acc = forest.accuracy(x_val, y_val)
    raw_drop = np.zeros(d)
    for j in range(d):
        drops = []
        for _ in range(permutations):
            shuffled = x_val.copy()
            shuffled[:, j] = x_val[rng.permutation(x_val.shape[0]), j]
            drops.append(base_acc - forest.accuracy(shuffled, y_val))
        raw_drop[j] = np.mean(drops)
    perm = _normalize(np.maximum(raw_drop, 0.0))

    combined = gini + perm
    order = np.argsort(-combined, kind="stable")
    return ImportanceRanking(
        feature_names=list(feature_names),
        gini=gini,
        permutation=perm,
        raw_permutation_drop=raw_drop,
        combined=combined,
        order=order,
    )


@dataclass
class SelectionReport:
    """Everything the per-dataset selection procedure produced."""

    feature_names: list                  # encoded names going into step 1
    after_variance: list
    after_correlation: list
    ranking: ImportanceRanking
    n_clamped: int = 0


def select_on_dataset(
    x: np.ndarray,
    feature_names: list,
    labels: np.ndarray,
    trees: int = 200,
    max_depth: int = 20,
    split_fraction: float = 0.7,
    seed: int = 0,
) -> SelectionReport:
    """Steps 1-4 on one encoded dataset.

    Quasi-constant and correlated features are dropped, a forest is fitted on
    a stratified 70% of the records, and importances are evaluated on the
    remaining 30%.
    """
    x = np.asarray(x, dtype=np.float64)
    retained = variance_filter(x)
    if retained.size == 0:
        raise DataError("all features are quasi-constant; nothing to select")
    after_var = [feature_names[i] for i in retained]
    retained = correlation_dedup(x, retained)
    after_corr = [feature_names[i] for i in retained]

    sub = x[:, retained]
    train_idx, val_idx = stratified_split(labels, split_fraction, seed)
    forest = fit_random_forest(sub[train_idx], labels[train_idx], trees, max_depth, seed)
    ranking = importance(
        forest,
        sub[val_idx],
        labels[val_idx],
        feature_names=after_corr,
        seed=seed,
    )
    return SelectionReport(
        feature_names=list(feature_names),
        after_variance=after_var,
        after_correlation=after_corr,
        ranking=ranking,
    )


def cross_dataset_select(
    ranking_a: ImportanceRanking,
    ranking_b: ImportanceRanking,
    broad: int = 20,
    guaranteed: int = 7,
) -> list:
    """Features in both broad top lists, plus each ranking's guaranteed top.

    The result is (top-``broad`` of A intersect top-``broad`` of B) union the
    top-``guaranteed`` of each, ordered by first appearance in A's feature
    list and then B's.
    """
    top_a = set(ranking_a.top(broad))
    top_b = set(ranking_b.top(broad))
    chosen = (top_a & top_b) | set(ranking_a.top(guaranteed)) | set(ranking_b.top(guaranteed))
    ordered = []
    for name in list(ranking_a.feature_names) + list(ranking_b.feature_names):
        if name in chosen and name not in ordered:
            ordered.append(name)
    return ordered
