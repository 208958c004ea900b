import gzip
import struct

import numpy as np
import pytest

from conftest import MNIST_DIR
from robustlab.cli import main
from robustlab.idim import gen_manifold

TRAIN_IMG = f"{MNIST_DIR}/train-images-idx3-ubyte.gz"
TRAIN_LAB = f"{MNIST_DIR}/train-labels-idx1-ubyte.gz"
TEST_IMG = f"{MNIST_DIR}/test-images-idx3-ubyte.gz"
TEST_LAB = f"{MNIST_DIR}/test-labels-idx1-ubyte.gz"


def _tiny_idx_pair(tmp_path, n=64, pixels=4):
    rng = np.random.default_rng(1)
    img = tmp_path / "imgs.idx"
    lab = tmp_path / "labs.idx"
    data = rng.integers(0, 256, size=(n, 1, pixels), dtype=np.uint8)
    img.write_bytes(struct.pack(">IIII", 0x803, n, 1, pixels) + data.tobytes())
    labels = np.tile(np.arange(2, dtype=np.uint8), n // 2)
    lab.write_bytes(struct.pack(">II", 0x801, n) + labels.tobytes())
    return str(img), str(lab)


@pytest.fixture(scope="module")
def init_ckpt(tmp_path_factory):
    """Untrained 10-class pipeline checkpoint on the vendored data."""
    out = tmp_path_factory.mktemp("cli") / "init.ckpt"
    code = main(["train", "--regime", "otc", "--epochs", "0",
                 "--train-images", TRAIN_IMG, "--train-labels", TRAIN_LAB,
                 "--out", str(out), "--seed", "7"])
    assert code == 0
    return str(out)


class TestExitCodes:
    def test_missing_seed_is_usage_error(self, tmp_path, capsys):
        code = main(["train", "--regime", "plain",
                     "--train-images", TRAIN_IMG, "--train-labels", TRAIN_LAB,
                     "--out", str(tmp_path / "x.ckpt")])
        assert code == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_regime_is_usage_error(self, tmp_path, capsys):
        code = main(["train", "--regime", "bogus",
                     "--train-images", TRAIN_IMG, "--train-labels", TRAIN_LAB,
                     "--out", str(tmp_path / "x.ckpt"), "--seed", "1"])
        assert code == 1

    def test_bad_checkpoint_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint\n\n")
        code = main(["curve", "--ckpt", str(bad), "--images", TEST_IMG, "--labels", TEST_LAB,
                     "--eps-grid", "0", "--out", str(tmp_path / "c.csv"), "--no-plot"])
        assert code == 2

    def test_bad_idx_is_data_error(self, tmp_path, init_ckpt):
        junk = tmp_path / "junk.idx"
        junk.write_bytes(b"\x00\x00\x08\x05junkjunk")
        code = main(["curve", "--ckpt", init_ckpt, "--images", str(junk), "--labels", TEST_LAB,
                     "--eps-grid", "0", "--out", str(tmp_path / "c.csv"), "--no-plot"])
        assert code == 2

    def test_divergence_is_exit_3(self, tmp_path):
        img, lab = _tiny_idx_pair(tmp_path)
        with np.errstate(over="ignore"):
            code = main(["train", "--regime", "plain", "--epochs", "200",
                         "--batch-size", "16", "--n-classes", "2",
                         "--plain-hidden", "8,8", "--adam-lr", "1e150",
                         "--train-images", img, "--train-labels", lab,
                         "--out", str(tmp_path / "d.ckpt"), "--seed", "0"])
        assert code == 3


class TestTrainCommand:
    def test_writes_checkpoint_and_log(self, tmp_path):
        out = tmp_path / "m.ckpt"
        log = tmp_path / "m.log.csv"
        code = main(["train", "--regime", "plain", "--epochs", "1",
                     "--train-images", TRAIN_IMG, "--train-labels", TRAIN_LAB,
                     "--out", str(out), "--log", str(log), "--seed", "3"])
        assert code == 0
        assert out.exists() and log.exists()
        header = log.read_text().splitlines()[0]
        assert header == "epoch,clean_acc,ce_loss,d_obj,wall_time_s"

    def test_config_file_with_cli_override(self, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("regime = plain\nepochs = 5  # overridden below\nbatch_size = 64\n")
        out = tmp_path / "m.ckpt"
        code = main(["train", "--config", str(cfg), "--epochs", "1",
                     "--train-images", TRAIN_IMG, "--train-labels", TRAIN_LAB,
                     "--out", str(out), "--seed", "3"])
        assert code == 0
        log_rows = (tmp_path / "m.ckpt.log.csv").read_text().splitlines()
        assert len(log_rows) == 2  # header plus exactly one epoch

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("regime = plain\nwarp_speed = 9\n")
        code = main(["train", "--config", str(cfg),
                     "--train-images", TRAIN_IMG, "--train-labels", TRAIN_LAB,
                     "--out", str(tmp_path / "m.ckpt"), "--seed", "3"])
        assert code == 1

    def test_training_log_deterministic_modulo_wall_time(self, tmp_path):
        logs = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.ckpt"
            code = main(["train", "--regime", "otc", "--epochs", "1", "--eval-train-n", "512",
                         "--train-images", TRAIN_IMG, "--train-labels", TRAIN_LAB,
                         "--out", str(out), "--seed", "11"])
            assert code == 0
            logs.append((tmp_path / f"{name}.ckpt.log.csv").read_text().splitlines())
        for row_a, row_b in zip(*logs):
            assert row_a.rsplit(",", 1)[0] == row_b.rsplit(",", 1)[0]

    def test_identical_seeds_identical_checkpoints(self, tmp_path):
        blobs_args = ["train", "--regime", "plain", "--epochs", "1",
                      "--train-images", TRAIN_IMG, "--train-labels", TRAIN_LAB, "--seed", "11"]
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        assert main(blobs_args + ["--out", str(a)]) == 0
        assert main(blobs_args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestCurveCommand:
    def test_chance_level_on_untrained_model(self, init_ckpt, tmp_path, capsys):
        out = tmp_path / "curve.csv"
        code = main(["curve", "--ckpt", init_ckpt, "--images", TEST_IMG, "--labels", TEST_LAB,
                     "--eps-grid", "0", "--eval-n", "1000", "--out", str(out), "--no-plot"])
        assert code == 0
        acc = float(out.read_text().splitlines()[-1].split(",")[1])
        assert 7.0 <= acc <= 13.0

    def test_byte_identical_reruns_and_figure(self, init_ckpt, tmp_path):
        args = ["curve", "--ckpt", init_ckpt, "--images", TEST_IMG, "--labels", TEST_LAB,
                "--eps-grid", "0,0.1", "--eval-n", "50", "--steps", "3"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + ["--out", str(a), "--no-plot"]) == 0
        assert main(args + ["--out", str(b), "--no-plot"]) == 0
        assert a.read_bytes() == b.read_bytes()
        png = tmp_path / "c.png"
        assert main(args + ["--out", str(tmp_path / "c.csv"), "--plot", str(png)]) == 0
        assert png.exists() and png.stat().st_size > 0

    def test_grid_syntax(self, init_ckpt, tmp_path):
        out = tmp_path / "curve.csv"
        code = main(["curve", "--ckpt", init_ckpt, "--images", TEST_IMG, "--labels", TEST_LAB,
                     "--eps-grid", "0:0.05:0.025", "--eval-n", "20", "--steps", "2",
                     "--out", str(out), "--no-plot"])
        assert code == 0
        rows = [r for r in out.read_text().splitlines() if r and not r.startswith("#")]
        assert rows[0] == "epsilon,accuracy_pct"
        assert [float(r.split(",")[0]) for r in rows[1:]] == [0.0, 0.025, 0.05]


class TestIdimCommand:
    def test_segment_csv_fixture(self, tmp_path, capsys):
        cloud = gen_manifold("segment", 1, 10, 1000, seed=42)
        path = tmp_path / "cloud.csv"
        np.savetxt(path, cloud, delimiter=",")
        code = main(["idim", "--input", str(path)])
        assert code == 0
        est = float(capsys.readouterr().out.strip())
        assert 0.9 <= est <= 1.2

    def test_idx_input(self, tmp_path, capsys):
        code = main(["idim", "--images", TEST_IMG, "--labels", TEST_LAB,
                     "--sample", "500", "--seed", "0"])
        assert code == 0
        est = float(capsys.readouterr().out.strip())
        assert 8.0 <= est <= 18.0

    def test_needs_exactly_one_source(self, capsys):
        assert main(["idim"]) == 1
        assert main(["idim", "--input", "x.csv", "--images", "y.idx", "--labels", "z.idx"]) == 1

    def test_embeddings_csv_header_handled(self, init_ckpt, tmp_path, capsys):
        emb = tmp_path / "emb.csv"
        code = main(["embed", "--ckpt", init_ckpt, "--images", TEST_IMG, "--labels", TEST_LAB,
                     "--out", str(emb), "--n", "400"])
        assert code == 0
        code = main(["idim", "--input", str(emb), "--k1", "3", "--k2", "8", "--sample", "300"])
        assert code == 0
        est = float(capsys.readouterr().out.strip().splitlines()[-1])
        assert 0.5 <= est <= 10.0  # a 4-d latent cloud


class TestAttackCommand:
    def test_writes_csv(self, init_ckpt, tmp_path):
        out = tmp_path / "attack.csv"
        code = main(["attack", "--ckpt", init_ckpt, "--images", TEST_IMG, "--labels", TEST_LAB,
                     "--family", "fgsm", "--eps", "0.2", "--n", "40",
                     "--out", str(out), "--seed", "1"])
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "index,label,prediction,success,linf,l2"
        assert len(rows) == 41

    def test_missing_seed_rejected(self, init_ckpt, tmp_path):
        code = main(["attack", "--ckpt", init_ckpt, "--images", TEST_IMG, "--labels", TEST_LAB,
                     "--out", str(tmp_path / "a.csv")])
        assert code == 1


class TestSelftestCommand:
    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out
