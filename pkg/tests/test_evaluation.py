import csv

import numpy as np
import pytest

from robustlab.attacks import AttackConfig
from robustlab.errors import UsageError
from robustlab.evaluation import (RobustnessCurve, accuracy, evaluate_curve, export_embeddings,
                                  read_curve_csv, write_attack_csv, write_curve_csv)
from robustlab.training import TrainConfig, train


@pytest.fixture(scope="module")
def blobs_pipeline(blobs_dataset):
    cfg = TrainConfig(regime="otc", epochs=10, batch_size=16, latent_dim=3, n_classes=3,
                      enc_hidden=(16,), cla_hidden=(8,), disc_hidden=(8,), seed=21)
    model, _ = train(cfg, blobs_dataset)
    return model


class TestRobustnessCurve:
    def test_grid_must_increase(self):
        with pytest.raises(UsageError):
            RobustnessCurve([0.0, 0.1, 0.1], [100.0, 50.0, 40.0])

    def test_accuracy_bounds(self):
        with pytest.raises(UsageError):
            RobustnessCurve([0.0, 0.1], [101.0, 50.0])


class TestEvaluateCurve:
    def test_degenerate_grid_equals_clean_accuracy(self, blobs_pipeline, blobs_dataset):
        curve = evaluate_curve(blobs_pipeline, blobs_dataset, "pgd_linf", [0.0], eval_n=100)
        clean = accuracy(blobs_pipeline, blobs_dataset.images[:100], blobs_dataset.labels[:100])
        assert curve.acc[0] == clean

    def test_monotone_grid_and_row_zero(self, blobs_pipeline, blobs_dataset):
        curve = evaluate_curve(blobs_pipeline, blobs_dataset, "pgd_linf", [0.0, 0.05, 0.2],
                               eval_n=60, attack=AttackConfig(family="pgd_linf", steps=8))
        assert curve.eps == [0.0, 0.05, 0.2]
        clean = accuracy(blobs_pipeline, blobs_dataset.images[:60], blobs_dataset.labels[:60])
        assert curve.acc[0] == clean
        assert all(0.0 <= a <= 100.0 for a in curve.acc)

    def test_eval_n_validated(self, blobs_pipeline, blobs_dataset):
        with pytest.raises(UsageError):
            evaluate_curve(blobs_pipeline, blobs_dataset, "pgd_linf", [0.0], eval_n=10**6)

    def test_cw_family_rejected(self, blobs_pipeline, blobs_dataset):
        with pytest.raises(UsageError):
            evaluate_curve(blobs_pipeline, blobs_dataset, "cw_l2", [0.0], eval_n=10)


class TestCurveCsv:
    def test_roundtrip(self, tmp_path):
        curve = RobustnessCurve([0.0, 0.1, 0.2], [97.5, 60.0, 12.25],
                                {"family": "pgd_linf", "steps": 40}, model_id="m.ckpt", eval_n=500)
        path = tmp_path / "curve.csv"
        write_curve_csv(curve, path)
        back = read_curve_csv(path)
        assert back.eps == curve.eps
        assert back.acc == curve.acc
        assert back.model_id == "m.ckpt"
        assert back.eval_n == 500
        assert back.attack["family"] == "pgd_linf"

    def test_write_is_deterministic(self, tmp_path):
        curve = RobustnessCurve([0.0, 0.1], [90.0, 42.0], {"family": "fgsm"}, "x", 10)
        write_curve_csv(curve, tmp_path / "a.csv")
        write_curve_csv(curve, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestExportEmbeddings:
    def test_clean_export_shape(self, blobs_pipeline, blobs_dataset, tmp_path):
        path = tmp_path / "emb.csv"
        n = export_embeddings(blobs_pipeline, blobs_dataset, path, eval_n=40)
        assert n == 40
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["label", "correct", "z0", "z1", "z2"]
        assert len(rows) == 41
        assert all(len(r) == blobs_pipeline.latent_dim + 2 for r in rows[1:])

    def test_identical_images_identical_rows(self, blobs_pipeline, blobs_dataset, tmp_path):
        from robustlab.dataio import Dataset
        img = blobs_dataset.images[:1]
        twin = Dataset(np.vstack([img, img]), np.array([0, 0]), n_classes=3)
        path = tmp_path / "emb.csv"
        export_embeddings(blobs_pipeline, twin, path)
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows[1][2:] == rows[2][2:]

    def test_adversarial_flag_matches_fresh_predict(self, blobs_pipeline, blobs_dataset, tmp_path):
        attack = AttackConfig(family="pgd_linf", eps=0.15, steps=6, random_start=False)
        path = tmp_path / "emb_adv.csv"
        export_embeddings(blobs_pipeline, blobs_dataset, path, attack=attack, eval_n=30)
        from robustlab.attacks import pgd_linf
        x, y = blobs_dataset.images[:30], blobs_dataset.labels[:30]
        x_adv = pgd_linf(blobs_pipeline, x, y, attack).x_adv
        expected = (blobs_pipeline.predict(x_adv) == y).astype(int)
        with open(path) as f:
            rows = list(csv.reader(f))
        flags = np.array([int(r[1]) for r in rows[1:]])
        assert np.array_equal(flags, expected)

    def test_plain_model_rejected(self, blobs_plain_model, blobs_dataset, tmp_path):
        with pytest.raises(UsageError):
            export_embeddings(blobs_plain_model, blobs_dataset, tmp_path / "x.csv")


class TestAttackCsv:
    def test_columns_and_consistency(self, blobs_plain_model, blobs_dataset, tmp_path):
        from robustlab.attacks import pgd_linf
        x, y = blobs_dataset.images[:25], blobs_dataset.labels[:25]
        result = pgd_linf(blobs_plain_model, x, y, AttackConfig(family="pgd_linf", eps=0.2, steps=5))
        path = tmp_path / "attack.csv"
        write_attack_csv(blobs_plain_model, result, y, path)
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["index", "label", "prediction", "success", "linf", "l2"]
        assert len(rows) == 26
        for r in rows[1:]:
            success = bool(int(r[3]))
            assert success == (int(r[1]) != int(r[2]))
