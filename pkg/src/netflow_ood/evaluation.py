"""Scoring, TPR/FPR/F1 metrics, and embedding-space export.

A true positive is an unknown-attack record flagged OOD; a false positive is
a benign record flagged OOD. Metrics with an empty denominator surface as
None ("n/a" in tables), never as silent zeros.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn_core
from .detectors import score_records
from .ensemble import EnsembleConfig, ensemble_flags
from .errors import ConfigurationError


@dataclass
class MemberResult:
    """Scores, flags and per-model predictions of one profile over a dataset."""

    key: str
    scores: np.ndarray
    flags: np.ndarray
    predicted: np.ndarray


@dataclass
class Verdict:
    """Per-record outcome across all members of a scoring run."""

    record_id: int
    predicted_class: int
    member_scores: dict
    member_flags: dict
    ensemble_flag: Optional[bool] = None


def score_dataset(
    members,
    x,
    ensemble: Optional[EnsembleConfig] = None,
) -> tuple:
    """Score every record with every (profile, model) member.

    ``members`` is a list of (DetectorProfile, FnnModel). Returns
    (list of Verdict, {member key: MemberResult}, ensemble flag array or None).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not members:
        raise ConfigurationError("no members to score with")

    predictions = {}
    results = {}
    for profile, model in members:
        key = profile.member_key
        mid = id(model)
        if mid not in predictions:
            predictions[mid] = nn_core.forward(model, x).logits.argmax(axis=1)
        scores = score_records(profile, model, x)
        results[key] = MemberResult(
            key=key,
            scores=scores,
            flags=profile.flags(scores),
            predicted=predictions[mid],
        )

    keys = [p.member_key for p, _ in members]
    if ensemble is not None:
        missing = [k for k in ensemble.member_keys if k not in results]
        if missing:
            raise ConfigurationError(f"ensemble members not scored: {missing}")
        matrix = np.stack([results[k].flags for k in ensemble.member_keys], axis=1)
        ens_flags = ensemble_flags(matrix)
    else:
        ens_flags = None

    first_pred = results[keys[0]].predicted
    verdicts = [
        Verdict(
            record_id=i,
            predicted_class=int(first_pred[i]),
            member_scores={k: float(results[k].scores[i]) for k in keys},
            member_flags={k: bool(results[k].flags[i]) for k in keys},
            ensemble_flag=None if ens_flags is None else bool(ens_flags[i]),
        )
        for i in range(x.shape[0])
    ]
    return verdicts, results, ens_flags


def _rate(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


@dataclass
class EvalReport:
    """OOD-decision quality over unknown attacks and benign traffic."""

    tp: int
    fn: int
    fp: int
    tn: int
    tpr: Optional[float]
    fpr: Optional[float]
    precision: Optional[float]
    f1: Optional[float]
    per_attack: dict                      # name -> {count, flagged, tpr}
    extra_rows: dict = field(default_factory=dict)  # e.g. foreign benign rejection
    config_fingerprint: str = ""

    def to_payload(self) -> dict:
        return {
            "counts": {"tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn},
            "tpr": self.tpr,
            "fpr": self.fpr,
            "precision": self.precision,
            "f1": self.f1,
            "per_attack": self.per_attack,
            "extra_rows": self.extra_rows,
            "config_fingerprint": self.config_fingerprint,
        }

    def format_table(self, title: str = "") -> str:
        def fmt(v):
            return "n/a" if v is None else f"{v:.4f}"

        lines = []
        if title:
            lines.append(title)
        width = max([len("total")] + [len(str(n)) for n in self.per_attack])
        for name in sorted(self.per_attack):
            row = self.per_attack[name]
            lines.append(
                f"  {name:<{width}}  tpr={fmt(row['tpr'])}  "
                f"({row['flagged']}/{row['count']})"
            )
        lines.append(
            f"  {'total':<{width}}  tpr={fmt(self.tpr)}  fpr={fmt(self.fpr)}  "
            f"f1={fmt(self.f1)}  tp={self.tp} fn={self.fn} fp={self.fp} tn={self.tn}"
        )
        for name, row in sorted(self.extra_rows.items()):
            lines.append(
                f"  {name:<{width}}  rejected={fmt(row['rejected_fraction'])}  "
                f"({row['flagged']}/{row['count']})"
            )
        return "\n".join(lines)


def compute_metrics(
    ood_flags,
    is_attack,
    attack_names=None,
    config_fingerprint: str = "",
) -> EvalReport:
    """Confusion counts and rates for the OOD-positive decision.

    ``is_attack`` marks unknown-attack records (positives); everything else is
    benign. ``attack_names`` gives the per-record original attack name for the
    per-attack breakdown (ignored for benign records).
    """
    flags = np.asarray(ood_flags, dtype=bool)
    attack = np.asarray(is_attack, dtype=bool)
    if flags.shape != attack.shape:
        raise ConfigurationError("flags and ground truth differ in length")

    tp = int(np.sum(flags & attack))
    fn = int(np.sum(~flags & attack))
    fp = int(np.sum(flags & ~attack))
    tn = int(np.sum(~flags & ~attack))

    tpr = _rate(tp, tp + fn)
    fpr = _rate(fp, fp + tn)
    precision = _rate(tp, tp + fp)
    f1 = None
    if precision is not None and tpr is not None:
        f1 = _rate(int(2 * tp), int(2 * tp + fp + fn))

    per_attack = {}
    if attack_names is not None:
        names = np.asarray(attack_names, dtype=object)
        for name in sorted({str(n) for n in names[attack]}):
            sel = attack & (names == name)
            count = int(sel.sum())
            flagged = int(np.sum(flags & sel))
            per_attack[str(name)] = {
                "count": count,
                "flagged": flagged,
                "tpr": _rate(flagged, count),
            }

    return EvalReport(
        tp=tp, fn=fn, fp=fp, tn=tn,
        tpr=tpr, fpr=fpr, precision=precision, f1=f1,
        per_attack=per_attack,
        config_fingerprint=config_fingerprint,
    )


def rejection_row(flags) -> dict:
    """Summary row for a side population (e.g. benign from another network)."""
    flags = np.asarray(flags, dtype=bool)
    return {
        "count": int(flags.size),
        "flagged": int(flags.sum()),
        "rejected_fraction": _rate(int(flags.sum()), int(flags.size)),
    }


# ---------------------------------------------------------------------------
# embedding export


def embedding_rows(model: nn_core.FnnModel, x, true_labels) -> list:
    """(x, y, true label, predicted label) per record, in dataset order."""
    trace = nn_core.forward(model, x)
    predicted = trace.logits.argmax(axis=1)
    names = model.class_names or [str(i) for i in range(model.n_classes)]
    rows = []
    for i in range(trace.embedding.shape[0]):
        rows.append(
            (
                float(trace.embedding[i, 0]),
                float(trace.embedding[i, 1]),
                str(true_labels[i]),
                names[int(predicted[i])],
            )
        )
    return rows


def decision_grid(
    model: nn_core.FnnModel,
    bounds=None,
    shape=(200, 200),
    reference=None,
    margin: float = 0.1,
) -> list:
    """Classifier softmax over a rectangular grid of embedding points.

    ``bounds`` is ((x0, x1), (y0, y1)); when None they are taken from the
    ``reference`` embeddings plus a relative margin.
    """
    if bounds is None:
        if reference is None:
            raise ConfigurationError("grid needs explicit bounds or reference points")
        ref = np.asarray(reference, dtype=np.float64)
        lo, hi = ref.min(axis=0), ref.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        lo, hi = lo - margin * span, hi + margin * span
        bounds = ((lo[0], hi[0]), (lo[1], hi[1]))
    (x0, x1), (y0, y1) = bounds
    xs = np.linspace(x0, x1, shape[0])
    ys = np.linspace(y0, y1, shape[1])
    rows = []
    cw = model.classifier
    for gy in ys:
        points = np.column_stack([xs, np.full_like(xs, gy)])
        logits = points @ cw.weights.T + cw.bias
        probs = nn_core.softmax(logits)
        for gx, p in zip(xs, probs):
            rows.append((float(gx), float(gy)) + tuple(float(v) for v in p))
    return rows


def write_embedding_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "true", "predicted"])
        for ex, ey, true, pred in rows:
            writer.writerow([repr(ex), repr(ey), true, pred])


def write_grid_csv(path, rows, n_classes: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"] + [f"p_{i}" for i in range(n_classes)])
        for row in rows:
            writer.writerow([repr(v) for v in row])
