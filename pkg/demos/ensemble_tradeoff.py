#!/usr/bin/env python3
"""Union ensembles: near-perfect unknown-attack rejection, more false alarms.

ens1 joins all six detectors over both the center-loss and the plain model
(12 members). ens2 keeps just three complementary members. Flagging a record
as soon as any member fires can only raise both the true-positive rate and
the false-positive rate over any single member; this script makes that
trade-off visible.
"""

import numpy as np

from netflow_ood import data_io, detectors, ensemble, evaluation, training

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
x_val, y_val = pools.train_x[val_idx], pools.train_y[val_idx]

models, profiles = {}, {}
for cl_enabled in (False, True):
    config = training.TrainConfig(regime="multiclass", cl_enabled=cl_enabled, seed=3)
    tag = config.regime_tag
    models[tag] = training.train(
        config, x_train, y_train, x_val, y_val, class_names=pools.class_names
    ).model
    for kind in detectors.DETECTOR_KINDS:
        profile = detectors.fit_profile(
            kind, models[tag], x_train, y_train, seed=3, regime_tag=tag
        )
        names = ood_dataset.labels.astype(str)
        if kind in ("odin", "md"):
            profile, _ = detectors.tune_odin_md(
                profile, models[tag], x_val, ood_dataset.x[names == "tuning_attack"]
            )
        else:
            profile = detectors.calibrate_profile(profile, models[tag], x_val)
        profiles[profile.member_key] = profile
print(f"calibrated {len(profiles)} profiles over {list(models)}")

names = ood_dataset.labels.astype(str)
unknown = ood_dataset.x[names == "unknown_attack"]
benign_val = x_val[y_val == 0]
eval_x = np.vstack([unknown, benign_val])
is_attack = np.r_[np.ones(len(unknown), bool), np.zeros(len(benign_val), bool)]

ens1 = ensemble.build_ens1(profiles, "multiclass-cl", "multiclass-ce")
ens2 = ensemble.build_ens2(profiles, "multiclass-cl", "multiclass-ce")

member_flags = {}
print(f"\n{'member':<22}{'tpr':>7}{'fpr':>7}")
for key in ens1.member_keys:
    kind, tag = key.split("@")
    flags = profiles[key].flags(
        detectors.score_records(profiles[key], models[tag], eval_x)
    )
    member_flags[key] = flags
    report = evaluation.compute_metrics(flags, is_attack)
    print(f"{key:<22}{report.tpr:>7.3f}{report.fpr:>7.3f}")

for cfg in (ens1, ens2):
    matrix = np.stack([member_flags[k] for k in cfg.member_keys], axis=1)
    report = evaluation.compute_metrics(ensemble.ensemble_flags(matrix), is_attack)
    print(
        f"\n{cfg.name} ({len(cfg.members)} members): "
        f"tpr={report.tpr:.3f} fpr={report.fpr:.3f} f1={report.f1:.3f}"
    )
