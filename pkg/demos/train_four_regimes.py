#!/usr/bin/env python3
"""Train the NetFlow classifier under all four regimes on synthetic traffic.

The four regimes are {binary, multiclass} x {cross-entropy only, cross-entropy
plus the center pull on embeddings}. Each run reports its per-epoch losses and
the best validation F1 snapshot that gets kept.
"""

import numpy as np

from netflow_ood import data_io, training

# three traffic classes, well separated in a 20-d feature space
spec = data_io.SyntheticSpec(
    id_blobs=[
        data_io.Blob("benign", np.array([30.0, 0.0, 0.0]), 2000, 0.5),
        data_io.Blob("dos", np.array([0.0, 30.0, 0.0]), 2000, 0.5),
        data_io.Blob("bot", np.array([0.0, 0.0, 30.0]), 2000, 0.5),
    ],
    seed=11,
    dim=20,
)
dataset, _ = data_io.generate_synthetic(spec)
print(f"generated {len(dataset)} records over classes {dataset.class_catalogue}")

results = {}
for regime in ("multiclass", "binary"):
    scenario = training.Scenario(benign="benign", attacks=["dos", "bot"], mode=regime)
    pools = data_io.assemble_scenario(dataset, scenario)
    train_idx, val_idx = training.stratified_split(pools.train_y, 0.7, seed=3)
    for cl_enabled in (False, True):
        config = training.TrainConfig(regime=regime, cl_enabled=cl_enabled, seed=3)
        result = training.train(
            config,
            pools.train_x[train_idx], pools.train_y[train_idx],
            pools.train_x[val_idx], pools.train_y[val_idx],
            class_names=pools.class_names,
        )
        results[config.regime_tag] = result
        print(f"\n=== {config.regime_tag} ===")
        print(f"best epoch {result.best_epoch}, validation F1 {result.best_f1:.4f}")
        for entry in result.log[:3]:
            print(
                f"  epoch {entry['epoch']}: ce={entry['ce_loss']:.4f} "
                f"cl={entry['cl_loss']:.4f} val_f1={entry['val_f1']:.4f}"
            )
        print("  ...")

print("\nsummary")
for tag, result in results.items():
    print(f"  {tag:<15} best_f1={result.best_f1:.4f} (epoch {result.best_epoch})")
print(
    "\nNote: at this tiny scale the center-pull regimes see only ~225 optimizer"
    "\nsteps, so their zero-initialized centers barely move and classification"
    "\nsuffers; the embedding clusters still tighten (see embedding_map.py)."
)
