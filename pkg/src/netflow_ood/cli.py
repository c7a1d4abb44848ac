"""Batch command-line front end.

One declarative JSON config drives every subcommand:

    netflow-ood select-features --config run.json
    netflow-ood train            --config run.json
    netflow-ood calibrate        --config run.json
    netflow-ood evaluate         --config run.json
    netflow-ood detect           --config run.json --input flows.csv
    netflow-ood export-embeddings --config run.json

Artifacts are deterministic given identical config and seeds; wall-clock
timestamps only ever land in the run.log sidecar. Exit codes: 0 success,
2 configuration/input error, 3 artifact-compatibility error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from . import data_io, detectors, ensemble, evaluation, features, nn_core, training
from .errors import (
    ArtifactMismatchError,
    CalibrationError,
    ConfigurationError,
    DataError,
    FitError,
    NetflowOodError,
    PersistenceError,
)

REGIME_TAGS = ("multiclass-cl", "multiclass-ce", "binary-cl", "binary-ce")


def _tag_parts(tag: str) -> tuple:
    try:
        regime, loss = tag.split("-")
    except ValueError:
        raise ConfigurationError(f"bad regime tag {tag!r}") from None
    if regime not in ("multiclass", "binary") or loss not in ("cl", "ce"):
        raise ConfigurationError(f"bad regime tag {tag!r}")
    return regime, loss == "cl"


@dataclass
class RunConfig:
    seed: int
    out_dir: str
    raw: dict

    @property
    def regimes(self) -> list:
        return list(self.raw.get("regimes", REGIME_TAGS))

    @property
    def detector_kinds(self) -> list:
        return list(self.raw.get("detectors", detectors.DETECTOR_KINDS))

    @property
    def eps_grid(self) -> list:
        return list(self.raw.get("eps_grid", detectors.EPS_GRID))

    @property
    def fingerprint(self) -> str:
        canon = json.dumps({"seed": self.seed, **self.raw}, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path, out_override=None, seed_override=None) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigurationError("a seed is mandatory (config 'seed' or --seed)")
    out_dir = out_override or raw.get("out_dir")
    if not out_dir:
        raise ConfigurationError("an output directory is mandatory ('out_dir' or --out)")

    for tag in raw.get("regimes", []):
        _tag_parts(tag)
    for kind in raw.get("detectors", []):
        if kind not in detectors.DETECTOR_KINDS:
            raise ConfigurationError(f"unknown detector {kind!r}")
    data = raw.get("data", {})
    csv_part = data.get("csv")
    if csv_part and not os.path.exists(csv_part["path"]):
        raise ConfigurationError(f"dataset file not found: {csv_part['path']}")
    for ds in raw.get("select_features", {}).get("datasets", []):
        if not os.path.exists(ds["path"]):
            raise ConfigurationError(f"selection dataset not found: {ds['path']}")

    return RunConfig(seed=int(seed), out_dir=out_dir, raw=raw)


def _log(config: RunConfig, message: str) -> None:
    os.makedirs(config.out_dir, exist_ok=True)
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(os.path.join(config.out_dir, "run.log"), "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {message}\n")
    print(message)


# ---------------------------------------------------------------------------
# data preparation


def _parse_blobs(docs) -> list:
    blobs = []
    for doc in docs:
        blobs.append(
            data_io.Blob(
                name=doc["name"],
                mean=np.asarray(doc["mean"], dtype=np.float64),
                count=int(doc["count"]),
                sigma=float(doc.get("sigma", 1.0)),
                cov=np.asarray(doc["cov"], dtype=np.float64) if "cov" in doc else None,
            )
        )
    return blobs


@dataclass
class PreparedData:
    pools: dict            # regime ("multiclass"|"binary") -> ScenarioPools
    train_idx: np.ndarray
    val_idx: np.ndarray
    benign_val_x: np.ndarray
    tuning: data_io.Dataset
    eval_unknown: data_io.Dataset
    foreign_benign: Optional[data_io.Dataset] = None


def prepare_data(config: RunConfig) -> PreparedData:
    raw = config.raw
    data = raw.get("data", {})
    scenario_doc = raw.get("scenario")
    if scenario_doc is None:
        raise ConfigurationError("config needs a 'scenario' section")

    if "synthetic" in data:
        sdoc = data["synthetic"]
        spec = data_io.SyntheticSpec(
            id_blobs=_parse_blobs(sdoc.get("id_blobs", [])),
            ood_blobs=_parse_blobs(sdoc.get("ood_blobs", [])),
            seed=int(sdoc.get("seed", config.seed)),
            dim=int(sdoc.get("dim", nn_core.INPUT_DIM)),
        )
        id_dataset, ood_dataset = data_io.generate_synthetic(spec)
    elif "csv" in data:
        cdoc = data["csv"]
        id_dataset, report = data_io.load_csv(
            cdoc["path"],
            label_column=cdoc.get("label_column", "label"),
            column_map=cdoc.get("column_map"),
        )
        ood_dataset = data_io.Dataset(
            x=np.empty((0, id_dataset.x.shape[1])), labels=np.array([], dtype=object)
        )
        print(
            f"loaded {report.rows_parsed}/{report.rows_total} rows "
            f"({report.rows_dropped} dropped, {report.values_clamped} clamped)"
        )
    else:
        raise ConfigurationError("config 'data' needs either 'synthetic' or 'csv'")

    pools = {}
    for mode in ("multiclass", "binary"):
        scenario = training.Scenario(
            benign=scenario_doc["benign"],
            attacks=list(scenario_doc["attacks"]),
            mode=mode,
        )
        pools[mode] = data_io.assemble_scenario(id_dataset, scenario)

    # one stratified split per scenario, shared by every regime
    train_idx, val_idx = training.stratified_split(
        pools["multiclass"].train_y,
        raw.get("train", {}).get("split_fraction", 0.7),
        config.seed,
    )

    mc = pools["multiclass"]
    benign_val_mask = mc.train_y[val_idx] == 0
    benign_val_x = mc.train_x[val_idx][benign_val_mask]

    # unknown universe: attacks outside the scenario plus any synthetic OOD blobs
    unknown = pools["multiclass"].unknown
    universe_x = np.vstack([unknown.x, ood_dataset.x])
    universe_labels = np.concatenate([unknown.labels, ood_dataset.labels])
    tuning_classes = set(raw.get("tuning_ood", {}).get("classes", []))
    known = {str(l) for l in universe_labels}
    missing = tuning_classes - known
    if missing:
        raise ConfigurationError(f"tuning classes not present in OOD pool: {sorted(missing)}")
    is_tuning = np.array([str(l) in tuning_classes for l in universe_labels], dtype=bool)
    tuning = data_io.Dataset(x=universe_x[is_tuning], labels=universe_labels[is_tuning])
    eval_unknown = data_io.Dataset(
        x=universe_x[~is_tuning], labels=universe_labels[~is_tuning]
    )

    foreign = None
    fdoc = data.get("foreign")
    if fdoc:
        fdataset, _ = data_io.load_csv(
            fdoc["path"],
            label_column=fdoc.get("label_column", "label"),
            column_map=fdoc.get("column_map"),
            provenance=fdoc.get("provenance", "foreign"),
        )
        benign_name = fdoc.get("benign", scenario_doc["benign"])
        fb_mask = fdataset.labels.astype(str) == benign_name
        foreign = fdataset.subset(fb_mask)
        f_attacks = fdataset.subset(~fb_mask)
        if len(f_attacks):
            prefix = fdataset.provenance
            renamed = np.array([f"{prefix}:{l}" for l in f_attacks.labels], dtype=object)
            eval_unknown = data_io.Dataset(
                x=np.vstack([eval_unknown.x, f_attacks.x]),
                labels=np.concatenate([eval_unknown.labels, renamed]),
            )

    return PreparedData(
        pools=pools,
        train_idx=train_idx,
        val_idx=val_idx,
        benign_val_x=benign_val_x,
        tuning=tuning,
        eval_unknown=eval_unknown,
        foreign_benign=foreign,
    )


def _train_config_for(config: RunConfig, tag: str) -> training.TrainConfig:
    regime, cl_enabled = _tag_parts(tag)
    overrides = dict(config.raw.get("train", {}))
    overrides.pop("split_fraction", None)  # split already applied upstream
    return training.TrainConfig(
        regime=regime,
        cl_enabled=cl_enabled,
        seed=config.seed,
        split_fraction=config.raw.get("train", {}).get("split_fraction", 0.7),
        **{k: v for k, v in overrides.items() if k in
           ("epochs", "batch_size", "lr_model", "lr_centers", "cl_weight")},
    )


def _model_path(config: RunConfig, tag: str) -> str:
    return os.path.join(config.out_dir, f"model-{tag}.json")


def _profile_path(config: RunConfig, kind: str, tag: str) -> str:
    return os.path.join(config.out_dir, f"profile-{kind}-{tag}.json")


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(config: RunConfig) -> int:
    prep = prepare_data(config)
    os.makedirs(config.out_dir, exist_ok=True)

    def run_one(tag: str):
        regime, _ = _tag_parts(tag)
        pools = prep.pools[regime]
        tc = _train_config_for(config, tag)
        result = training.train(
            tc,
            pools.train_x[prep.train_idx],
            pools.train_y[prep.train_idx],
            pools.train_x[prep.val_idx],
            pools.train_y[prep.val_idx],
            class_names=pools.class_names,
        )
        data_io.save_model(_model_path(config, tag), result.model)
        log_lines = [json.dumps(entry, sort_keys=True) for entry in result.log]
        data_io.atomic_write_text(
            os.path.join(config.out_dir, f"trainlog-{tag}.jsonl"),
            "\n".join(log_lines) + "\n",
        )
        return tag, result

    workers = int(config.raw.get("workers", 1))
    tags = config.regimes
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, tags))
    else:
        results = [run_one(t) for t in tags]
    for tag, result in results:
        _log(config, f"train {tag}: best epoch {result.best_epoch} val_f1={result.best_f1:.4f}")
    return 0


def _load_models(config: RunConfig) -> dict:
    models = {}
    for tag in config.regimes:
        path = _model_path(config, tag)
        if not os.path.exists(path):
            raise ConfigurationError(f"model artifact missing: {path} (run train first)")
        models[tag] = data_io.load_model(path)
    return models


def cmd_calibrate(config: RunConfig) -> int:
    prep = prepare_data(config)
    models = _load_models(config)
    kinds = config.detector_kinds
    needs_tuning = any(k in ("odin", "md") for k in kinds)
    if needs_tuning and len(prep.tuning) == 0:
        raise CalibrationError(
            "odin/md need a tuning OOD pool; set tuning_ood.classes in the config"
        )

    def run_one(tag: str):
        regime, _ = _tag_parts(tag)
        pools = prep.pools[regime]
        model = models[tag]
        fingerprint = data_io.model_fingerprint(model)
        x_tr = pools.train_x[prep.train_idx]
        y_tr = pools.train_y[prep.train_idx]
        x_val = pools.train_x[prep.val_idx]
        lines = []
        for kind in kinds:
            profile = detectors.fit_profile(
                kind, model, x_tr, y_tr,
                seed=config.seed,
                model_fingerprint=fingerprint,
                regime_tag=tag,
            )
            if kind in ("odin", "md"):
                profile, table = detectors.tune_odin_md(
                    profile, model, x_val, prep.tuning.x, config.eps_grid
                )
                data_io.save_document(
                    os.path.join(config.out_dir, f"tuning-{kind}-{tag}.json"),
                    "tuning_grid",
                    {"detector": kind, "regime_tag": tag, "grid": table,
                     "chosen_eps": profile.state["eps"]},
                )
            else:
                profile = detectors.calibrate_profile(profile, model, x_val)
            data_io.save_profile(_profile_path(config, kind, tag), profile)
            lines.append(f"calibrate {kind}@{tag}: threshold={profile.threshold:.6g}")
        return lines

    workers = int(config.raw.get("workers", 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_lines = list(pool.map(run_one, config.regimes))
    else:
        all_lines = [run_one(t) for t in config.regimes]
    for lines in all_lines:
        for line in lines:
            _log(config, line)
    return 0


def _load_profiles(config: RunConfig, models: dict) -> dict:
    """Load every (kind, tag) profile and verify model fingerprints."""
    profiles = {}
    for tag in config.regimes:
        fingerprint = data_io.model_fingerprint(models[tag])
        for kind in config.detector_kinds:
            path = _profile_path(config, kind, tag)
            if not os.path.exists(path):
                raise ConfigurationError(f"profile missing: {path} (run calibrate first)")
            profile = data_io.load_profile(path)
            if profile.model_fingerprint != fingerprint:
                raise ArtifactMismatchError(
                    f"{path}: profile was calibrated for model {profile.model_fingerprint}"
                    f" but model-{tag}.json has fingerprint {fingerprint}"
                )
            profiles[profile.member_key] = profile
    return profiles


def _ensemble_configs(config: RunConfig, profiles: dict) -> list:
    out = []
    for doc in config.raw.get("ensembles", []):
        builtin = doc.get("builtin")
        regime = doc.get("regime", "multiclass")
        cl_tag, ce_tag = f"{regime}-cl", f"{regime}-ce"
        name = doc.get("name") or builtin or "ensemble"
        if builtin == "ens1":
            cfg = ensemble.build_ens1(profiles, cl_tag, ce_tag)
        elif builtin == "ens2":
            cfg = ensemble.build_ens2(profiles, cl_tag, ce_tag)
        elif builtin is None:
            cfg = ensemble.build_ensemble(name, [tuple(m) for m in doc["members"]], profiles)
        else:
            raise ConfigurationError(f"unknown builtin ensemble {builtin!r}")
        if name != cfg.name:
            cfg = ensemble.EnsembleConfig(name=name, members=cfg.members, policy=cfg.policy)
        out.append(cfg)
    return out


def cmd_evaluate(config: RunConfig) -> int:
    prep = prepare_data(config)
    models = _load_models(config)
    profiles = _load_profiles(config, models)

    unknown = prep.eval_unknown
    if len(unknown) == 0:
        _log(config, "evaluate: unknown-attack pool is empty; nothing to evaluate")
        return 0

    eval_x = np.vstack([unknown.x, prep.benign_val_x])
    is_attack = np.concatenate(
        [np.ones(len(unknown), dtype=bool), np.zeros(len(prep.benign_val_x), dtype=bool)]
    )
    attack_names = np.concatenate(
        [unknown.labels, np.array(["benign"] * len(prep.benign_val_x), dtype=object)]
    )

    members = [
        (profiles[f"{kind}@{tag}"], models[tag])
        for tag in config.regimes
        for kind in config.detector_kinds
    ]
    _, results, _ = evaluation.score_dataset(members, eval_x)

    def attach_foreign(report, flags_by_key):
        if prep.foreign_benign is not None and len(prep.foreign_benign):
            report.extra_rows[prep.foreign_benign.provenance + "-benign"] = flags_by_key
        return report

    emitted = []
    for profile, model in members:
        key = profile.member_key
        flags = results[key].flags
        report = evaluation.compute_metrics(
            flags, is_attack, attack_names, config_fingerprint=config.fingerprint
        )
        if prep.foreign_benign is not None and len(prep.foreign_benign):
            f_scores = detectors.score_records(profile, model, prep.foreign_benign.x)
            report.extra_rows[f"{prep.foreign_benign.provenance}-benign"] = (
                evaluation.rejection_row(profile.flags(f_scores))
            )
        stem = os.path.join(config.out_dir, f"report-{key.replace('@', '-')}")
        data_io.save_report(stem + ".json", report.to_payload())
        data_io.atomic_write_text(stem + ".txt", report.format_table(key) + "\n")
        emitted.append((key, report))

    for ens_cfg in _ensemble_configs(config, profiles):
        matrix = np.stack([results[k].flags for k in ens_cfg.member_keys], axis=1)
        flags = ensemble.ensemble_flags(matrix)
        report = evaluation.compute_metrics(
            flags, is_attack, attack_names, config_fingerprint=config.fingerprint
        )
        if prep.foreign_benign is not None and len(prep.foreign_benign):
            f_matrix = []
            for key in ens_cfg.member_keys:
                kind, tag = key.split("@")
                prof = profiles[key]
                f_scores = detectors.score_records(prof, models[tag], prep.foreign_benign.x)
                f_matrix.append(prof.flags(f_scores))
            f_flags = ensemble.ensemble_flags(np.stack(f_matrix, axis=1))
            report.extra_rows[f"{prep.foreign_benign.provenance}-benign"] = (
                evaluation.rejection_row(f_flags)
            )
        stem = os.path.join(config.out_dir, f"report-ensemble-{ens_cfg.name}")
        data_io.save_ensemble(
            os.path.join(config.out_dir, f"ensemble-{ens_cfg.name}.json"), ens_cfg
        )
        data_io.save_report(stem + ".json", report.to_payload())
        data_io.atomic_write_text(
            stem + ".txt", report.format_table(f"ensemble {ens_cfg.name}") + "\n"
        )
        emitted.append((f"ensemble-{ens_cfg.name}", report))

    for key, report in emitted:
        tpr = "n/a" if report.tpr is None else f"{report.tpr:.4f}"
        fpr = "n/a" if report.fpr is None else f"{report.fpr:.4f}"
        _log(config, f"evaluate {key}: tpr={tpr} fpr={fpr}")
    return 0


def cmd_detect(config: RunConfig, input_path: str, output: Optional[str]) -> int:
    if not os.path.exists(input_path):
        raise ConfigurationError(f"input file not found: {input_path}")
    doc = config.raw.get("detect", {})
    tags = doc.get("regimes", config.regimes)
    kinds = doc.get("detectors", config.detector_kinds)
    models = {}
    for tag in tags:
        models[tag] = data_io.load_model(_model_path(config, tag))
    members = []
    for tag in tags:
        fingerprint = data_io.model_fingerprint(models[tag])
        for kind in kinds:
            profile = data_io.load_profile(_profile_path(config, kind, tag))
            if profile.model_fingerprint != fingerprint:
                raise ArtifactMismatchError(
                    f"profile {kind}@{tag} does not match model-{tag}.json"
                )
            members.append((profile, models[tag]))

    label_column = doc.get("label_column")
    if label_column:
        dataset, _ = data_io.load_csv(
            input_path, label_column=label_column, column_map=doc.get("column_map")
        )
        x = dataset.x
    else:
        # no label column required: parse and encode the feature columns only
        frame = pd.read_csv(input_path)
        column_map = doc.get("column_map") or {}
        headers = [column_map.get(n, n) for n, _ in features.NETFLOW_V1_RAW_COLUMNS]
        missing = [h for h in headers if h not in frame.columns]
        if missing:
            raise DataError(f"{input_path}: missing column(s) {missing}")
        values = frame[headers].apply(pd.to_numeric, errors="coerce").to_numpy(np.float64)
        good = np.isfinite(values).all(axis=1)
        x, _ = features.preprocess_records(values[good])

    ens_cfg = None
    if doc.get("ensemble"):
        profiles = {p.member_key: p for p, _ in members}
        ens_cfg = ensemble.build_ensemble(
            doc["ensemble"].get("name", "detect"),
            [tuple(m) for m in doc["ensemble"]["members"]],
            profiles,
        )
    verdicts, results, _ = evaluation.score_dataset(members, x, ens_cfg)

    keys = [p.member_key for p, _ in members]
    out_path = output or os.path.join(config.out_dir, "verdicts.csv")
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    first_model = members[0][1]
    names = first_model.class_names or [str(i) for i in range(first_model.n_classes)]
    tmp = out_path + ".tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["record_id", "predicted"]
        for key in keys:
            header += [f"score:{key}", f"ood:{key}"]
        if ens_cfg is not None:
            header.append("ood:ensemble")
        writer.writerow(header)
        for v in verdicts:
            row = [v.record_id, names[v.predicted_class]]
            for key in keys:
                row += [repr(v.member_scores[key]), int(v.member_flags[key])]
            if ens_cfg is not None:
                row.append(int(v.ensemble_flag))
            writer.writerow(row)
    os.replace(tmp, out_path)
    _log(config, f"detect: wrote {len(verdicts)} verdicts to {out_path}")
    return 0


def cmd_select_features(config: RunConfig) -> int:
    doc = config.raw.get("select_features")
    if not doc or not doc.get("datasets"):
        raise ConfigurationError("config needs select_features.datasets")
    os.makedirs(config.out_dir, exist_ok=True)

    reports = []
    for i, ds in enumerate(doc["datasets"]):
        columns = [(name, kind) for name, kind in ds["columns"].items()]
        raw, labels, load_report = data_io.load_raw_csv(
            ds["path"], columns, ds.get("label_column", "label")
        )
        encoded, names, _, n_clamped = features.encode_columns(raw, columns)
        report = features.select_on_dataset(
            encoded,
            names,
            labels,
            trees=int(doc.get("trees", 200)),
            max_depth=int(doc.get("max_depth", 20)),
            seed=config.seed,
        )
        report.n_clamped = n_clamped
        reports.append(report)
        payload = {
            "dataset": ds["path"],
            "rows_parsed": load_report.rows_parsed,
            "rows_dropped": load_report.rows_dropped,
            "after_variance": report.after_variance,
            "after_correlation": report.after_correlation,
            "ranking": [
                {"feature": n, "gini": g, "permutation": p, "combined": c, "rank": r}
                for n, g, p, c, r in report.ranking.rows()
            ],
        }
        data_io.save_document(
            os.path.join(config.out_dir, f"features-dataset{i}.json"),
            "feature_ranking",
            payload,
        )
        lines = ["feature                        gini      permut    combined  rank"]
        for n, g, p, c, r in report.ranking.rows():
            lines.append(f"{n:<30} {g:<9.4f} {p:<9.4f} {c:<9.4f} {r}")
        data_io.atomic_write_text(
            os.path.join(config.out_dir, f"features-dataset{i}.txt"),
            "\n".join(lines) + "\n",
        )

    if len(reports) >= 2:
        selected = features.cross_dataset_select(reports[0].ranking, reports[1].ranking)
    else:
        selected = reports[0].ranking.top(20)
    data_io.save_document(
        os.path.join(config.out_dir, "selected-features.json"),
        "selected_features",
        {"selected": selected, "n_datasets": len(reports)},
    )
    _log(config, f"select-features: {len(selected)} features selected")
    return 0


def cmd_export_embeddings(config: RunConfig) -> int:
    prep = prepare_data(config)
    doc = config.raw.get("export", {})
    shape = tuple(doc.get("grid", (200, 200)))
    bounds = doc.get("bounds")
    tags = doc.get("regimes", config.regimes)
    os.makedirs(config.out_dir, exist_ok=True)
    for tag in tags:
        regime, _ = _tag_parts(tag)
        model = data_io.load_model(_model_path(config, tag))
        if nn_core.EMBED_DIM != 2:
            raise ConfigurationError("embedding export needs a 2-d embedding model")
        pools = prep.pools[regime]
        names = pools.class_names
        true_names = [names[i] for i in pools.train_y]
        rows = evaluation.embedding_rows(model, pools.train_x, true_names)
        emb = np.array([(r[0], r[1]) for r in rows])
        grid = evaluation.decision_grid(
            model,
            bounds=tuple(map(tuple, bounds)) if bounds else None,
            shape=shape,
            reference=emb,
        )
        epath = os.path.join(config.out_dir, f"embeddings-{tag}.csv")
        gpath = os.path.join(config.out_dir, f"grid-{tag}.csv")
        tmp = epath + ".tmp"
        evaluation.write_embedding_csv(tmp, rows)
        os.replace(tmp, epath)
        tmp = gpath + ".tmp"
        evaluation.write_grid_csv(tmp, grid, model.n_classes)
        os.replace(tmp, gpath)
        _log(config, f"export {tag}: {len(rows)} embeddings, {len(grid)} grid cells")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netflow-ood",
        description="Train NetFlow classifiers and calibrate OOD detectors around them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (
        "select-features", "train", "calibrate", "detect", "evaluate", "export-embeddings",
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        if name == "detect":
            p.add_argument("--input", required=True, help="CSV of records to score")
            p.add_argument("--verdicts", default=None, help="output CSV path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.out, args.seed)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "calibrate":
            return cmd_calibrate(config)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        if args.command == "detect":
            return cmd_detect(config, args.input, args.verdicts)
        if args.command == "select-features":
            return cmd_select_features(config)
        if args.command == "export-embeddings":
            return cmd_export_embeddings(config)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ArtifactMismatchError as exc:
        _emit_error(3, exc)
        return 3
    except (
        ConfigurationError, DataError, CalibrationError, FitError,
        PersistenceError, NetflowOodError, FileNotFoundError,
    ) as exc:
        _emit_error(2, exc)
        return 2


def _emit_error(code: int, exc: Exception) -> None:
    msg = str(exc).replace('"', "'").replace("\n", " ")
    print(f'NETFLOW-OOD-ERROR code={code} kind={type(exc).__name__} msg="{msg}"',
          file=sys.stderr)


if __name__ == "__main__":
    raise SystemExit(main())
