#!/usr/bin/env python3
"""Drive the whole toolchain through the CLI from one run configuration.

Writes a config describing synthetic traffic, then runs:
train -> calibrate -> evaluate -> export-embeddings, and finally scores a
fresh CSV with the saved artifacts via detect. Everything lands in
./pipeline-out; rerunning reproduces every artifact byte for byte.
"""

import json
import os

from netflow_ood import cli

OUT = "pipeline-out"

config = {
    "seed": 3,
    "out_dir": OUT,
    "data": {
        "synthetic": {
            "dim": 20,
            "id_blobs": [
                {"name": "benign", "mean": [30.0, 0.0, 0.0], "sigma": 0.5, "count": 2000},
                {"name": "dos", "mean": [0.0, 30.0, 0.0], "sigma": 0.5, "count": 2000},
                {"name": "bot", "mean": [0.0, 0.0, 30.0], "sigma": 0.5, "count": 2000},
            ],
            "ood_blobs": [
                {"name": "unknown_attack", "mean": [0.0, 0.0, 0.0], "sigma": 0.5, "count": 1000},
                {"name": "tuning_attack", "mean": [-15.0, -15.0, -15.0], "sigma": 0.5, "count": 300},
            ],
        }
    },
    "scenario": {"benign": "benign", "attacks": ["dos", "bot"]},
    "tuning_ood": {"classes": ["tuning_attack"]},
    "regimes": ["multiclass-cl", "multiclass-ce", "binary-cl", "binary-ce"],
    "detectors": ["conf", "mcd", "odin", "md", "sim", "knn"],
    "ensembles": [
        {"builtin": "ens1", "name": "ens1", "regime": "multiclass"},
        {"builtin": "ens2", "name": "ens2", "regime": "multiclass"},
    ],
    "export": {"grid": [200, 200], "regimes": ["multiclass-cl", "multiclass-ce"]},
}

os.makedirs(OUT, exist_ok=True)
cfg_path = os.path.join(OUT, "run.json")
with open(cfg_path, "w") as fh:
    json.dump(config, fh, indent=2)
print(f"wrote {cfg_path}")

for command in ("train", "calibrate", "evaluate", "export-embeddings"):
    print(f"\n$ netflow-ood {command} --config {cfg_path}")
    code = cli.main([command, "--config", cfg_path])
    assert code == 0, f"{command} exited {code}"

print(f"\nartifacts in {OUT}/:")
for name in sorted(os.listdir(OUT)):
    print(f"  {name}")

print("\nreading one report back:")
with open(os.path.join(OUT, "report-ensemble-ens2.json")) as fh:
    report = json.load(fh)
print(f"  ens2 tpr={report['tpr']:.3f} fpr={report['fpr']:.3f} f1={report['f1']:.3f}")
