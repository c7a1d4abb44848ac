import numpy as np
import pytest

from netflow_ood import detectors, evaluation, nn_core
from netflow_ood.ensemble import EnsembleConfig
from netflow_ood.errors import ConfigurationError


class TestComputeMetrics:
    def test_hand_counts(self):
        flags = np.array([True] * 8 + [False] * 2 + [True] * 2 + [False] * 98)
        is_attack = np.array([True] * 10 + [False] * 100)
        report = evaluation.compute_metrics(flags, is_attack)
        assert (report.tp, report.fn, report.fp, report.tn) == (8, 2, 2, 98)
        assert report.tpr == 0.8
        assert report.fpr == 0.02
        assert report.precision == 0.8
        assert report.f1 == 0.8

    def test_all_id_verdicts(self):
        flags = np.zeros(50, dtype=bool)
        is_attack = np.array([True] * 20 + [False] * 30)
        report = evaluation.compute_metrics(flags, is_attack)
        assert report.tpr == 0.0
        assert report.fpr == 0.0
        assert report.precision is None  # no positives declared

    def test_zero_denominators_surface_as_none(self):
        report = evaluation.compute_metrics(
            np.array([False, False]), np.array([False, False])
        )
        assert report.tpr is None
        assert report.fpr == 0.0
        assert report.f1 is None

    def test_per_attack_breakdown_aggregates(self):
        rng = np.random.default_rng(0)
        names = np.array(
            ["dos"] * 40 + ["bot"] * 60 + ["benign"] * 100, dtype=object
        )
        is_attack = np.array([True] * 100 + [False] * 100)
        flags = rng.random(200) < 0.5
        report = evaluation.compute_metrics(flags, is_attack, names)
        assert set(report.per_attack) == {"dos", "bot"}
        weighted = sum(r["flagged"] for r in report.per_attack.values())
        assert weighted == report.tp
        total = sum(r["count"] for r in report.per_attack.values())
        assert total == report.tp + report.fn
        assert abs(report.tpr - weighted / total) < 1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        flags = rng.random(300) < 0.3
        is_attack = rng.random(300) < 0.5
        names = np.array([f"a{i % 3}" for i in range(300)], dtype=object)
        base = evaluation.compute_metrics(flags, is_attack, names)
        perm = rng.permutation(300)
        spun = evaluation.compute_metrics(flags[perm], is_attack[perm], names[perm])
        assert base.to_payload() == spun.to_payload()

    def test_brute_force_recount_on_random_verdicts(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(1, 200))
            flags = rng.random(n) < rng.uniform(0, 1)
            is_attack = rng.random(n) < rng.uniform(0, 1)
            report = evaluation.compute_metrics(flags, is_attack)
            tp = sum(1 for f, a in zip(flags, is_attack) if f and a)
            fn = sum(1 for f, a in zip(flags, is_attack) if not f and a)
            fp = sum(1 for f, a in zip(flags, is_attack) if f and not a)
            tn = sum(1 for f, a in zip(flags, is_attack) if not f and not a)
            assert (report.tp, report.fn, report.fp, report.tn) == (tp, fn, fp, tn)
            if tp + fn:
                assert report.tpr == tp / (tp + fn)
            if (tp + fn) and (tp + fp):  # both recall and precision defined
                assert report.f1 == 2 * tp / (2 * tp + fp + fn)
            else:
                assert report.f1 is None

    def test_length_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            evaluation.compute_metrics(np.zeros(3, bool), np.zeros(4, bool))

    def test_table_renders_undefined_as_na(self):
        report = evaluation.compute_metrics(np.array([False]), np.array([True]))
        text = report.format_table("t")
        assert "n/a" in text


def _calibrated(kind, model, world, eps=0.001):
    profile = detectors.fit_profile(
        kind, model, world["x_train"], world["y_train"], seed=3,
        regime_tag="multiclass-ce", eps=eps,
    )
    return detectors.calibrate_profile(profile, model, world["x_val"])


class TestScoreDataset:
    def test_empty_dataset(self, trained_model, blob_world):
        profile = _calibrated("conf", trained_model, blob_world)
        verdicts, results, _ = evaluation.score_dataset(
            [(profile, trained_model)], np.empty((0, 20))
        )
        assert verdicts == []
        assert results[profile.member_key].scores.size == 0

    def test_single_member_ensemble_equals_member(self, trained_model, blob_world):
        profile = _calibrated("knn", trained_model, blob_world)
        ens = EnsembleConfig(name="solo", members=[("knn", "multiclass-ce")])
        x = np.vstack([blob_world["x_val"][:50], blob_world["ood_eval"][:50]])
        verdicts, results, ens_flags = evaluation.score_dataset(
            [(profile, trained_model)], x, ens
        )
        assert np.array_equal(ens_flags, results[profile.member_key].flags)
        assert all(
            v.ensemble_flag == v.member_flags[profile.member_key] for v in verdicts
        )

    def test_flags_recomputable_from_scores(self, trained_model, blob_world):
        x = np.vstack([blob_world["x_val"][:80], blob_world["ood_eval"][:80]])
        for kind in ("conf", "sim", "knn", "md"):
            profile = _calibrated(kind, trained_model, blob_world)
            verdicts, results, _ = evaluation.score_dataset([(profile, trained_model)], x)
            key = profile.member_key
            for v in verdicts:
                score = v.member_scores[key]
                if profile.direction == detectors.REJECT_BELOW:
                    assert v.member_flags[key] == (score < profile.threshold)
                else:
                    assert v.member_flags[key] == (score > profile.threshold)

    def test_no_members_rejected(self):
        with pytest.raises(ConfigurationError):
            evaluation.score_dataset([], np.zeros((1, 20)))


class TestEmbeddingExport:
    def test_record_rows_match_dataset(self, trained_model, blob_world):
        x = blob_world["x_val"][:100]
        labels = ["c"] * 100
        rows = evaluation.embedding_rows(trained_model, x, labels)
        assert len(rows) == 100
        emb = nn_core.forward(trained_model, x).embedding
        assert rows[0][0] == emb[0, 0]
        assert rows[0][1] == emb[0, 1]

    def test_grid_probabilities_sum_to_one(self, trained_model):
        rows = evaluation.decision_grid(
            trained_model, bounds=((-1.0, 1.0), (-1.0, 1.0)), shape=(2, 2)
        )
        assert len(rows) == 4
        for row in rows:
            assert abs(sum(row[2:]) - 1.0) < 1e-12

    def test_grid_matches_classifier_only_forward(self, trained_model):
        rows = evaluation.decision_grid(
            trained_model, bounds=((-2.0, 2.0), (-2.0, 2.0)), shape=(5, 5)
        )
        cw = trained_model.classifier
        for row in rows:
            point = np.array(row[:2])
            probs = nn_core.softmax(point @ cw.weights.T + cw.bias)
            assert np.allclose(row[2:], probs, atol=1e-15)

    def test_grid_reproducible(self, trained_model, blob_world):
        emb = nn_core.forward(trained_model, blob_world["x_val"][:50]).embedding
        g1 = evaluation.decision_grid(trained_model, reference=emb, shape=(4, 4))
        g2 = evaluation.decision_grid(trained_model, reference=emb, shape=(4, 4))
        assert g1 == g2

    def test_grid_needs_bounds_or_reference(self, trained_model):
        with pytest.raises(ConfigurationError):
            evaluation.decision_grid(trained_model, shape=(2, 2))

    def test_csv_writers(self, tmp_path, trained_model, blob_world):
        x = blob_world["x_val"][:10]
        rows = evaluation.embedding_rows(trained_model, x, ["k"] * 10)
        epath = tmp_path / "emb.csv"
        evaluation.write_embedding_csv(epath, rows)
        lines = epath.read_text().strip().splitlines()
        assert lines[0] == "x,y,true,predicted"
        assert len(lines) == 11
        grid = evaluation.decision_grid(
            trained_model, bounds=((0.0, 1.0), (0.0, 1.0)), shape=(3, 3)
        )
        gpath = tmp_path / "grid.csv"
        evaluation.write_grid_csv(gpath, grid, trained_model.n_classes)
        glines = gpath.read_text().strip().splitlines()
        assert glines[0] == "x,y,p_0,p_1,p_2"
        assert len(glines) == 10
        # byte-identical rewrite
        gpath2 = tmp_path / "grid2.csv"
        evaluation.write_grid_csv(gpath2, grid, trained_model.n_classes)
        assert gpath.read_bytes() == gpath2.read_bytes()


class TestRejectionRow:
    def test_counts(self):
        row = evaluation.rejection_row(np.array([True, False, True, True]))
        assert row == {"count": 4, "flagged": 3, "rejected_fraction": 0.75}
