"""Training regimes for the NetFlow classifier.

Covers the stratified 70/30 split, class-balanced batch sampling with
replacement, cross-entropy optimization with an optional center-pull term on
the embeddings (applied only to correctly classified samples), and validation
F1 model selection. Four regimes come out of the combinations
{binary, multiclass} x {with, without the center term}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn_core
from .errors import ConfigurationError, DataError, TrainingDivergedError


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 512
    lr_model: float = 0.0005
    lr_centers: float = 0.0001
    cl_weight: float = 1.0
    regime: str = "multiclass"
    cl_enabled: bool = False
    seed: int = 0
    split_fraction: float = 0.7

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.lr_model <= 0 or self.lr_centers <= 0:
            raise ConfigurationError("learning rates must be positive")
        if not (0.0 < self.split_fraction < 1.0):
            raise ConfigurationError(
                f"split_fraction must lie in (0, 1), got {self.split_fraction}"
            )
        if self.regime not in ("binary", "multiclass"):
            raise ConfigurationError(f"unknown regime {self.regime!r}")

    @property
    def regime_tag(self) -> str:
        return f"{self.regime}-{'cl' if self.cl_enabled else 'ce'}"


@dataclass
class ClassCenters:
    """Learned per-class embedding centers and their own Adam state."""

    centers: np.ndarray  # (|C|, 2)
    adam: nn_core.AdamState

    @classmethod
    def zeros(cls, n_classes: int) -> "ClassCenters":
        centers = np.zeros((n_classes, nn_core.EMBED_DIM))
        return cls(centers=centers, adam=nn_core.AdamState.for_tensors([centers]))

    def copy(self) -> "ClassCenters":
        c = self.centers.copy()
        adam = nn_core.AdamState(
            m=[a.copy() for a in self.adam.m],
            v=[a.copy() for a in self.adam.v],
            t=self.adam.t,
            beta1=self.adam.beta1,
            beta2=self.adam.beta2,
            eps=self.adam.eps,
        )
        return ClassCenters(centers=c, adam=adam)


@dataclass
class Scenario:
    """Which classes are trained on; everything else becomes unknown traffic."""

    benign: str
    attacks: list
    mode: str = "multiclass"  # multiclass: benign=0, attacks 1..k; binary: 0/1

    def __post_init__(self):
        if self.mode not in ("binary", "multiclass"):
            raise ConfigurationError(f"unknown scenario mode {self.mode!r}")
        names = [self.benign] + list(self.attacks)
        if len(set(names)) != len(names):
            raise ConfigurationError("scenario classes must be disjoint")

    @property
    def train_class_names(self) -> list:
        if self.mode == "binary":
            return [self.benign, "malicious"]
        return [self.benign] + list(self.attacks)


def stratified_split(labels, fraction: float = 0.7, seed: int = 0):
    """Split record indices per class at the given fraction.

    Returns (train_idx, val_idx) as sorted integer arrays. Every class keeps at
    least one record on each side; classes with fewer than two records are
    rejected.
    """
    if not (0.0 < fraction < 1.0):
        raise ConfigurationError(f"fraction must lie in (0, 1), got {fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 0x5711])
    train_parts, val_parts = [], []
    for cls in sorted(np.unique(labels).tolist()):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise DataError(f"class {cls!r} has {idx.size} record(s); need >= 2 to split")
        perm = rng.permutation(idx)
        n_train = int(round(fraction * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_parts.append(perm[:n_train])
        val_parts.append(perm[n_train:])
    return (
        np.sort(np.concatenate(train_parts)),
        np.sort(np.concatenate(val_parts)),
    )


def class_balance_weights(labels) -> np.ndarray:
    """Per-record sampling weights proportional to 1/frequency of the class."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("cannot balance an empty label set")
    _, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    w = 1.0 / counts[inverse]
    return w / w.sum()


def balanced_batches(labels, batch_size: int, rng: np.random.Generator):
    """One epoch of index batches, sampled with replacement.

    Record i is drawn with probability inversely proportional to its class
    frequency, so expected batches are class-balanced. An epoch emits
    ceil(N / batch_size) batches.
    """
    labels = np.asarray(labels)
    n_classes = np.unique(labels).size
    if batch_size < n_classes:
        raise ConfigurationError(
            f"batch_size {batch_size} smaller than the {n_classes} classes"
        )
    weights = class_balance_weights(labels)
    n = labels.size
    for _ in range(math.ceil(n / batch_size)):
        yield rng.choice(n, size=batch_size, replace=True, p=weights)


def center_loss(embeddings, labels, centers, mask):
    """Half squared distance of masked embeddings to their class centers.

    Returns (loss, d_loss/d_embeddings, d_loss/d_centers). Masked-out samples
    contribute nothing to either the loss or the gradients; the center gradient
    of class j is the sum of (c_j - e_i) over its masked members.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    mask = np.asarray(mask, dtype=bool)
    diff = (embeddings - centers[labels]) * mask[:, None]
    loss = 0.5 * float(np.sum(diff * diff))
    d_emb = diff
    d_centers = np.zeros_like(centers)
    np.add.at(d_centers, labels, -diff)
    return loss, d_emb, d_centers


def f1_from_predictions(y_true, y_pred, n_classes: int, regime: str = "multiclass") -> float:
    """Macro F1 over classes; the malicious-class F1 in the binary regime.

    Per-class F1 with an empty denominator counts as 0 in the macro average.
    """
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    scores = []
    for c in range(n_classes):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom > 0 else 0.0)
    if regime == "binary":
        return scores[1]
    return float(np.mean(scores))


def validation_f1(model: nn_core.FnnModel, x, y) -> float:
    trace = nn_core.forward(model, x)
    preds = trace.logits.argmax(axis=1)
    return f1_from_predictions(y, preds, model.n_classes, model.regime)


@dataclass
class TrainResult:
    model: nn_core.FnnModel
    centers: Optional[ClassCenters]
    log: list = field(default_factory=list)  # per-epoch dicts
    best_epoch: int = -1
    best_f1: float = float("nan")


def train(
    config: TrainConfig,
    train_x,
    train_y,
    val_x,
    val_y,
    class_names: Optional[list] = None,
) -> TrainResult:
    """Run one training regime and return the best validation-F1 snapshot.

    The split is assumed done. Model parameters follow Adam at lr_model; when
    the center term is enabled the centers follow a separate Adam at
    lr_centers. The correctness mask for the center term comes from a
    deterministic forward pass taken before the update.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.intp)
    val_x = np.asarray(val_x, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.intp)
    n_classes = int(max(train_y.max(), val_y.max())) + 1
    if n_classes < 2:
        raise DataError("training needs at least two classes")

    model = nn_core.init_model(
        n_classes,
        regime=config.regime,
        seed=config.seed,
        input_dim=train_x.shape[1],
        class_names=class_names,
    )
    model.cl_trained = config.cl_enabled
    model_adam = nn_core.AdamState.for_tensors(nn_core.model_tensors(model))
    centers = ClassCenters.zeros(n_classes) if config.cl_enabled else None

    sampler_rng = np.random.default_rng([config.seed, 0xBA7C])
    dropout_rng = np.random.default_rng([config.seed, 0xD809])

    best = TrainResult(model=model.copy(), centers=None, best_epoch=-1, best_f1=-1.0)
    log = []
    for epoch in range(config.epochs):
        ce_sum, cl_sum, n_batches = 0.0, 0.0, 0
        for batch_no, idx in enumerate(
            balanced_batches(train_y, config.batch_size, sampler_rng)
        ):
            xb, yb = train_x[idx], train_y[idx]
            if config.cl_enabled:
                det = nn_core.forward(model, xb)
                cl_mask = det.logits.argmax(axis=1) == yb
            else:
                cl_mask = None

            trace = nn_core.forward(model, xb, rng=dropout_rng)
            grads, parts = nn_core.param_gradients(
                model,
                xb,
                yb,
                centers=centers.centers if centers is not None else None,
                cl_mask=cl_mask,
                cl_weight=config.cl_weight if config.cl_enabled else 0.0,
                trace=trace,
            )
            if not (math.isfinite(parts["ce"]) and math.isfinite(parts["cl"])):
                raise TrainingDivergedError(epoch, batch_no, parts["ce"], parts["cl"])
            nn_core.adam_step(
                model_adam,
                nn_core.model_tensors(model),
                nn_core.gradient_tensors(grads),
                config.lr_model,
            )
            if config.cl_enabled:
                _, _, d_centers = center_loss(
                    trace.embedding, yb, centers.centers, cl_mask
                )
                nn_core.adam_step(
                    centers.adam,
                    [centers.centers],
                    [config.cl_weight * d_centers],
                    config.lr_centers,
                )
            ce_sum += parts["ce"]
            cl_sum += parts["cl"]
            n_batches += 1

        val_f1 = validation_f1(model, val_x, val_y)
        log.append(
            {
                "epoch": epoch,
                "ce_loss": ce_sum / n_batches,
                "cl_loss": cl_sum / n_batches,
                "val_f1": val_f1,
            }
        )
        if val_f1 > best.best_f1:
            best.model = model.copy()
            best.centers = centers.copy() if centers is not None else None
            best.best_epoch = epoch
            best.best_f1 = val_f1

    best.log = log
    return best
