#!/usr/bin/env python3
"""Fit, calibrate, and compare all six OOD detectors on one trained model.

Each detector is reduced to (score, threshold, direction). Thresholds come
from the nearest-rank percentile that keeps 95% of in-distribution validation
traffic; odin and md additionally sweep their perturbation size over a grid,
picking the value with the best rejection rate on a held-out tuning cluster.
"""

import numpy as np

from netflow_ood import data_io, detectors, training

spec = data_io.SyntheticSpec(
    id_blobs=[
        data_io.Blob("benign", np.array([30.0, 0.0, 0.0]), 2000, 0.5),
        data_io.Blob("dos", np.array([0.0, 30.0, 0.0]), 2000, 0.5),
        data_io.Blob("bot", np.array([0.0, 0.0, 30.0]), 2000, 0.5),
    ],
    ood_blobs=[
        data_io.Blob("unknown_attack", np.zeros(3), 1000, 0.5),
        data_io.Blob("tuning_attack", np.array([-15.0, -15.0, -15.0]), 300, 0.5),
    ],
    seed=11,
    dim=20,
)
id_dataset, ood_dataset = data_io.generate_synthetic(spec)
scenario = training.Scenario(benign="benign", attacks=["dos", "bot"], mode="multiclass")
pools = data_io.assemble_scenario(id_dataset, scenario)
train_idx, val_idx = training.stratified_split(pools.train_y, 0.7, seed=3)
x_train, y_train = pools.train_x[train_idx], pools.train_y[train_idx]
x_val = pools.train_x[val_idx]

result = training.train(
    training.TrainConfig(regime="multiclass", cl_enabled=False, seed=3),
    x_train, y_train, x_val, pools.train_y[val_idx],
    class_names=pools.class_names,
)
model = result.model
print(f"trained multiclass model, validation F1 {result.best_f1:.4f}\n")

names = ood_dataset.labels.astype(str)
unknown = ood_dataset.x[names == "unknown_attack"]
tuning = ood_dataset.x[names == "tuning_attack"]

print(f"{'detector':<9}{'direction':<15}{'threshold':>12}{'val rej':>9}{'OOD TPR':>9}")
for kind in detectors.DETECTOR_KINDS:
    profile = detectors.fit_profile(kind, model, x_train, y_train, seed=3)
    if kind in ("odin", "md"):
        profile, table = detectors.tune_odin_md(profile, model, x_val, tuning)
    else:
        profile = detectors.calibrate_profile(profile, model, x_val)
    val_rej = profile.flags(detectors.score_records(profile, model, x_val)).mean()
    tpr = profile.flags(detectors.score_records(profile, model, unknown)).mean()
    print(
        f"{kind:<9}{profile.direction:<15}{profile.threshold:>12.5g}"
        f"{val_rej:>9.3f}{tpr:>9.3f}"
    )
    if kind in ("odin", "md"):
        chosen = profile.state["eps"]
        swept = ", ".join(f"{row['eps']:g}:{row['tune_tpr']:.2f}" for row in table)
        print(f"         eps sweep (eps:tuning-TPR)  {swept}  -> chose {chosen:g}")

print(
    "\nEvery detector keeps >= 95% of the validation traffic by construction;"
    "\nthe OOD column shows how much of the unknown cluster each one rejects."
)
