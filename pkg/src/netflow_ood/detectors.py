"""Out-of-distribution detectors around the NetFlow classifier.

Six detectors, each reduced to a scalar score plus a rejection threshold:

- conf: maximum softmax probability (reject below).
- mcd: std of the max softmax over stochastic dropout passes (reject above).
- odin: temperature-scaled confidence after a signed-gradient input nudge
  toward the predicted class (reject below).
- md: class-conditional Mahalanobis distance of the embedding after a
  signed-gradient nudge that descends the distance (reject above).
- sim: simplified silhouette against per-class embedding centers, with the
  nearest center treated as the own cluster (reject below).
- knn: Euclidean distance to the k-th nearest stored training embedding of
  the predicted class (reject above).

Thresholds come from nearest-rank percentiles on in-distribution validation
scores so that 95% of validation traffic is retained; odin and md also tune
their perturbation size on held-out OOD traffic.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import nn_core
from .errors import CalibrationError, ConfigurationError, FitError

logger = logging.getLogger(__name__)

REJECT_BELOW = "reject-below"
REJECT_ABOVE = "reject-above"

DETECTOR_KINDS = ("conf", "mcd", "odin", "md", "sim", "knn")
DIRECTION = {
    "conf": REJECT_BELOW,
    "mcd": REJECT_ABOVE,
    "odin": REJECT_BELOW,
    "md": REJECT_ABOVE,
    "sim": REJECT_BELOW,
    "knn": REJECT_ABOVE,
}

ODIN_TEMPERATURE = 20.0
EPS_GRID = (0.0001, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5)
MCD_PASSES = 30
MCD_DROPOUT_P = 0.4
KNN_K = 25
MD_RIDGE = 1e-6
RETENTION = 0.95


@dataclass
class ClassGaussianStats:
    """Per-class embedding means with a shared (pooled) covariance."""

    means: np.ndarray       # (|C|, 2)
    covariance: np.ndarray  # (2, 2), pooled over classes, without ridge
    ridge: float = MD_RIDGE

    @property
    def precision(self) -> np.ndarray:
        reg = self.covariance + self.ridge * np.eye(self.covariance.shape[0])
        return np.linalg.inv(reg)

    def distances(self, embeddings: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distance to the nearest class, per record."""
        diffs = embeddings[:, None, :] - self.means[None, :, :]
        d2 = np.einsum("ncj,jk,nck->nc", diffs, self.precision, diffs)
        return d2.min(axis=1)


@dataclass
class DetectorProfile:
    """Fitted, calibrated state of one detector attached to one model."""

    kind: str
    direction: str
    threshold: Optional[float]
    state: dict
    model_fingerprint: str = ""
    regime_tag: str = ""

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ConfigurationError(f"unknown detector kind {self.kind!r}")
        if self.direction != DIRECTION[self.kind]:
            raise ConfigurationError(
                f"{self.kind} must use direction {DIRECTION[self.kind]!r}"
            )

    @property
    def member_key(self) -> str:
        return f"{self.kind}@{self.regime_tag}" if self.regime_tag else self.kind

    def flags(self, scores: np.ndarray) -> np.ndarray:
        """True where a record is rejected as OOD."""
        if self.threshold is None:
            raise CalibrationError(f"{self.kind} profile has no threshold yet")
        scores = np.asarray(scores, dtype=np.float64)
        if self.direction == REJECT_BELOW:
            return scores < self.threshold
        return scores > self.threshold


# ---------------------------------------------------------------------------
# scores


def conf_score(model: nn_core.FnnModel, x) -> np.ndarray:
    trace = nn_core.forward(model, x)
    return nn_core.softmax(trace.logits).max(axis=1)


def mcd_score(
    model: nn_core.FnnModel,
    x,
    passes: int = MCD_PASSES,
    seed: int = 0,
    dropout_p: float = MCD_DROPOUT_P,
) -> np.ndarray:
    """Std of the max softmax over stochastic forward passes.

    Each record's dropout masks are seeded from a hash of (seed, record
    bytes), so the score depends only on the record itself, not on batch
    composition or ordering.
    """
    if passes < 2:
        raise ConfigurationError(f"need at least 2 passes, got {passes}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    scores = np.empty(x.shape[0])
    seed_bytes = int(seed).to_bytes(8, "little", signed=True)
    for i, row in enumerate(x):
        digest = hashlib.sha256(seed_bytes + row.tobytes()).digest()
        rng = np.random.default_rng(np.frombuffer(digest[:16], dtype=np.uint64))
        repeated = np.broadcast_to(row, (passes, row.size))
        trace = nn_core.forward(model, repeated, rng=rng, dropout_p=dropout_p)
        confidences = nn_core.softmax(trace.logits).max(axis=1)
        scores[i] = confidences.std()
    return scores


def odin_score(
    model: nn_core.FnnModel,
    x,
    eps: float,
    temperature: float = ODIN_TEMPERATURE,
) -> np.ndarray:
    """Temperature-scaled confidence after the signed-gradient nudge.

    The input moves by eps in the direction that raises the max softmax, which
    pushes in-distribution records toward their class; the re-scored max
    softmax is returned.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    grad = nn_core.input_gradient_confidence(model, x, temperature)
    perturbed = x + eps * np.sign(grad)
    trace = nn_core.forward(model, perturbed)
    return nn_core.softmax(trace.logits, temperature).max(axis=1)


def md_fit(model: nn_core.FnnModel, x_train, y_train, ridge: float = MD_RIDGE) -> ClassGaussianStats:
    """Per-class embedding means and a pooled covariance from training data."""
    y_train = np.asarray(y_train, dtype=np.intp)
    emb = nn_core.forward(model, x_train).embedding
    classes = np.unique(y_train)
    if any(np.sum(y_train == c) < 3 for c in classes):
        raise FitError("every class needs at least 3 samples for covariance pooling")
    means = np.zeros((model.n_classes, emb.shape[1]))
    pooled = np.zeros((emb.shape[1], emb.shape[1]))
    for c in classes:
        e = emb[y_train == c]
        means[c] = e.mean(axis=0)
        centered = e - means[c]
        pooled += centered.T @ centered
    pooled /= emb.shape[0]
    stats = ClassGaussianStats(means=means, covariance=pooled, ridge=ridge)
    eigmin = float(np.linalg.eigvalsh(pooled + ridge * np.eye(pooled.shape[0])).min())
    if eigmin < 1e-12:
        raise FitError(f"covariance nearly singular even after the {ridge} ridge")
    return stats


def md_score(
    model: nn_core.FnnModel, x, stats: ClassGaussianStats, eps: float
) -> np.ndarray:
    """Nearest-class Mahalanobis distance after a distance-descending nudge.

    The nearest class is re-resolved on the perturbed embedding.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    grad = nn_core.input_gradient_class_distance(model, x, stats.means, stats.precision)
    perturbed = x - eps * np.sign(grad)
    emb = nn_core.forward(model, perturbed).embedding
    return stats.distances(emb)


def sim_fit(model: nn_core.FnnModel, x_train, y_train) -> np.ndarray:
    """Per-class mean embedding."""
    y_train = np.asarray(y_train, dtype=np.intp)
    emb = nn_core.forward(model, x_train).embedding
    centers = np.zeros((model.n_classes, emb.shape[1]))
    for c in range(model.n_classes):
        members = emb[y_train == c]
        if members.shape[0] == 0:
            raise FitError(f"class {c} has no training embeddings")
        centers[c] = members.mean(axis=0)
    return centers


def sim_score(centers: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
    """Simplified silhouette: (b-a)/max(a,b) with centroid distances.

    a is the distance to the nearest center (treated as the own cluster) and
    b the distance to the second nearest; coincident nearest centers score 0.
    """
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape[0] < 2:
        raise ConfigurationError("simplified silhouette needs at least 2 centers")
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    dists = np.linalg.norm(embeddings[:, None, :] - centers[None, :, :], axis=2)
    dists.sort(axis=1)
    a, b = dists[:, 0], dists[:, 1]
    widest = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(widest > 0.0, (b - a) / widest, 0.0)
    return s


def knn_fit(model: nn_core.FnnModel, x_train, y_train, k: int = KNN_K) -> dict:
    """Store every training embedding, grouped by class."""
    y_train = np.asarray(y_train, dtype=np.intp)
    emb = nn_core.forward(model, x_train).embedding
    stores = {}
    for c in range(model.n_classes):
        members = emb[y_train == c]
        if members.shape[0] == 0:
            raise FitError(f"class {c} has no training embeddings")
        if members.shape[0] < k:
            logger.warning(
                "class %d holds %d embeddings; k clamps from %d to %d",
                c, members.shape[0], k, members.shape[0],
            )
        stores[c] = members
    return stores


def knn_score(
    stores: dict, predicted: np.ndarray, embeddings: np.ndarray, k: int = KNN_K
) -> np.ndarray:
    """Distance to the k-th nearest stored embedding of the predicted class."""
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    predicted = np.asarray(predicted, dtype=np.intp)
    scores = np.empty(embeddings.shape[0])
    for i, (cls, e) in enumerate(zip(predicted, embeddings)):
        store = stores[int(cls)]
        d = np.linalg.norm(store - e, axis=1)
        k_eff = min(k, d.size)
        scores[i] = np.partition(d, k_eff - 1)[k_eff - 1]
    return scores


def score_records(profile: DetectorProfile, model: nn_core.FnnModel, x) -> np.ndarray:
    """Raw scores of one profile over a batch of records."""
    kind, st = profile.kind, profile.state
    if kind == "conf":
        return conf_score(model, x)
    if kind == "mcd":
        return mcd_score(model, x, st["passes"], st["seed"], st["dropout_p"])
    if kind == "odin":
        return odin_score(model, x, st["eps"], st["temperature"])
    if kind == "md":
        stats = ClassGaussianStats(st["means"], st["covariance"], st["ridge"])
        return md_score(model, x, stats, st["eps"])
    if kind == "sim":
        emb = nn_core.forward(model, x).embedding
        return sim_score(st["centers"], emb)
    if kind == "knn":
        trace = nn_core.forward(model, x)
        predicted = trace.logits.argmax(axis=1)
        return knn_score(st["stores"], predicted, trace.embedding, st["k"])
    raise ConfigurationError(f"unknown detector kind {kind!r}")


# ---------------------------------------------------------------------------
# fitting and calibration


def fit_profile(
    kind: str,
    model: nn_core.FnnModel,
    x_train,
    y_train,
    seed: int = 0,
    model_fingerprint: str = "",
    regime_tag: str = "",
    eps: float = 0.0,
) -> DetectorProfile:
    """Build an uncalibrated profile (threshold still unset).

    ``eps`` only matters for odin/md and is normally overwritten by the
    tuning grid.
    """
    if kind == "conf":
        state = {}
    elif kind == "mcd":
        state = {"passes": MCD_PASSES, "dropout_p": MCD_DROPOUT_P, "seed": seed}
    elif kind == "odin":
        state = {"temperature": ODIN_TEMPERATURE, "eps": eps}
    elif kind == "md":
        stats = md_fit(model, x_train, y_train)
        state = {
            "means": stats.means,
            "covariance": stats.covariance,
            "ridge": stats.ridge,
            "eps": eps,
        }
    elif kind == "sim":
        state = {"centers": sim_fit(model, x_train, y_train)}
    elif kind == "knn":
        state = {"stores": knn_fit(model, x_train, y_train), "k": KNN_K}
    else:
        raise ConfigurationError(f"unknown detector kind {kind!r}")
    return DetectorProfile(
        kind=kind,
        direction=DIRECTION[kind],
        threshold=None,
        state=state,
        model_fingerprint=model_fingerprint,
        regime_tag=regime_tag,
    )


def calibrate_threshold(
    scores, direction: str, retention: float = RETENTION
) -> float:
    """Nearest-rank percentile threshold retaining the target ID fraction.

    reject-below uses the (1-retention) percentile, reject-above the
    retention percentile; on the calibration scores themselves at most
    (1-retention) of the records end up rejected.
    """
    scores = np.sort(np.asarray(scores, dtype=np.float64))
    n = scores.size
    if n < 20:
        raise CalibrationError(f"need at least 20 calibration scores, got {n}")
    if not (0.0 < retention < 1.0):
        raise CalibrationError(f"retention must lie in (0, 1), got {retention}")
    if direction == REJECT_BELOW:
        rank = max(1, math.ceil((1.0 - retention) * n - 1e-9))
    elif direction == REJECT_ABOVE:
        rank = max(1, math.ceil(retention * n - 1e-9))
    else:
        raise ConfigurationError(f"unknown direction {direction!r}")
    return float(scores[rank - 1])


def calibrate_profile(
    profile: DetectorProfile,
    model: nn_core.FnnModel,
    x_val,
    retention: float = RETENTION,
) -> DetectorProfile:
    """Return a copy of the profile with its threshold set from ID validation."""
    scores = score_records(profile, model, x_val)
    tau = calibrate_threshold(scores, profile.direction, retention)
    return replace(profile, threshold=tau)


def tune_odin_md(
    profile: DetectorProfile,
    model: nn_core.FnnModel,
    x_val,
    x_tune_ood,
    eps_grid=EPS_GRID,
    retention: float = RETENTION,
) -> tuple:
    """Pick the perturbation size with the best TPR on held-out OOD traffic.

    For each eps the threshold is recalibrated at the ID retention target and
    the rejection rate on the tuning OOD set is measured. Ties go to the
    smallest eps. Returns (calibrated profile, per-eps table).
    """
    if profile.kind not in ("odin", "md"):
        raise ConfigurationError(f"eps tuning applies to odin/md, not {profile.kind}")
    x_tune_ood = np.atleast_2d(np.asarray(x_tune_ood, dtype=np.float64))
    if x_tune_ood.shape[0] == 0:
        raise CalibrationError("eps tuning needs a non-empty OOD tuning set")
    if len(eps_grid) == 0:
        raise CalibrationError("eps grid is empty")

    best = None
    table = []
    for eps in sorted(eps_grid):
        candidate = replace(profile, state={**profile.state, "eps": float(eps)})
        candidate = calibrate_profile(candidate, model, x_val, retention)
        ood_scores = score_records(candidate, model, x_tune_ood)
        tpr = float(candidate.flags(ood_scores).mean())
        table.append({"eps": float(eps), "threshold": candidate.threshold, "tune_tpr": tpr})
        if best is None or tpr > best[0]:
            best = (tpr, candidate)
    return best[1], table
