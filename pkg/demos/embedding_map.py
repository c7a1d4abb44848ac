#!/usr/bin/env python3
"""Export the 2-d embedding space and the classifier's decision grid.

Trains the same data twice (with and without the center pull) and writes, for
each model, a CSV of per-record embeddings and a CSV sampling the classifier
softmax over a rectangular grid. If matplotlib is importable the two panels
are also rendered side by side into embeddings.png.
"""

import numpy as np

from netflow_ood import data_io, evaluation, nn_core, training

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
scenario = training.Scenario(benign="benign", attacks=["dos", "bot"], mode="multiclass")
pools = data_io.assemble_scenario(dataset, scenario)
train_idx, val_idx = training.stratified_split(pools.train_y, 0.7, seed=3)

exports = {}
for cl_enabled in (False, True):
    config = training.TrainConfig(regime="multiclass", cl_enabled=cl_enabled, seed=3)
    result = training.train(
        config,
        pools.train_x[train_idx], pools.train_y[train_idx],
        pools.train_x[val_idx], pools.train_y[val_idx],
        class_names=pools.class_names,
    )
    model = result.model
    tag = config.regime_tag
    true_names = [pools.class_names[i] for i in pools.train_y[val_idx]]
    rows = evaluation.embedding_rows(model, pools.train_x[val_idx], true_names)
    emb = np.array([(r[0], r[1]) for r in rows])
    grid = evaluation.decision_grid(model, reference=emb, shape=(200, 200))
    evaluation.write_embedding_csv(f"embeddings-{tag}.csv", rows)
    evaluation.write_grid_csv(f"grid-{tag}.csv", grid, model.n_classes)
    exports[tag] = (rows, grid, model)
    print(f"{tag}: wrote embeddings-{tag}.csv ({len(rows)} rows) "
          f"and grid-{tag}.csv ({len(grid)} cells)")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not available; CSVs are ready for external plotting")
else:
    fig, axes = plt.subplots(1, 2, figsize=(11, 5), sharex=False)
    for ax, (tag, (rows, grid, model)) in zip(axes, exports.items()):
        gx = np.array([g[0] for g in grid])
        gy = np.array([g[1] for g in grid])
        winner = np.array([int(np.argmax(g[2:])) for g in grid])
        ax.scatter(gx, gy, c=winner, s=2, alpha=0.15, cmap="Pastel1", marker="s")
        labels = sorted({r[2] for r in rows})
        for label in labels:
            pts = np.array([(r[0], r[1]) for r in rows if r[2] == label])
            ax.scatter(pts[:, 0], pts[:, 1], s=4, label=label)
        ax.set_title(tag)
        ax.legend(markerscale=3, fontsize=8)
    fig.tight_layout()
    fig.savefig("embeddings.png", dpi=120)
    print("rendered embeddings.png")
