#!/usr/bin/env python3
"""The four-step random-forest feature selection, end to end.

Two synthetic datasets share the same column universe. In both, only the
first two columns carry the label signal; one column is constant and one is a
scaled copy of another. Steps: (1) drop quasi-constant columns, (2) drop one
of each highly correlated pair, (3) fit a 200-tree forest, (4) rank by the
normalized sum of Gini and permutation importance. The cross-dataset rule
then keeps features in both broad top lists plus each dataset's own top picks.
"""

import numpy as np

from netflow_ood import features


def make_dataset(seed):
    rng = np.random.default_rng(seed)
    n = 3000
    signal = rng.normal(size=(n, 2))
    noise = rng.normal(size=(n, 4))
    constant = np.full((n, 1), 7.0)
    duplicate = signal[:, :1] * 3.0  # perfectly correlated with column 0
    x = np.hstack([signal, noise, constant, duplicate])
    y = ((signal[:, 0] + signal[:, 1]) > 0).astype(int)
    return x, y


names = ["syn_a", "syn_b", "noise_0", "noise_1", "noise_2", "noise_3", "const", "dup_a"]

reports = []
for i, seed in enumerate((5, 6)):
    x, y = make_dataset(seed)
    report = features.select_on_dataset(x, names, y, trees=200, max_depth=20, seed=9)
    reports.append(report)
    print(f"=== dataset {i} ===")
    print(f"  after variance filter:    {report.after_variance}")
    print(f"  after correlation dedup:  {report.after_correlation}")
    print(f"  {'feature':<10}{'gini':>8}{'perm':>8}{'combined':>10}  rank")
    for name, gini, perm, combined, rank in report.ranking.rows():
        print(f"  {name:<10}{gini:>8.4f}{perm:>8.4f}{combined:>10.4f}  {rank}")
    print()

selected = features.cross_dataset_select(
    reports[0].ranking, reports[1].ranking, broad=4, guaranteed=2
)
print(f"cross-dataset selection (broad top-4 intersection + guaranteed top-2): {selected}")
