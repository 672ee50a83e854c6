import json

import numpy as np
import pytest

from aqvec.cli import main
from aqvec.data import read_csv
from aqvec.serialization import read_metrics, read_pgm

FAST = ["--epochs", "2", "--qubits", "2"]


def write_config(tmp_path, text=""):
    p = tmp_path / "cfg.toml"
    p.write_text("anneal.steps = 4\ndata.n_train = 24\ndata.n_test = 8\noutput.figures = false\n" + text)
    return p


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = write_config(tmp)
    assert main(["train", "--config", str(cfg), "--out", str(tmp / "out"), *FAST]) == 0
    return tmp, cfg, tmp / "out"


class TestGenData:
    def test_sizes_and_identity(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["gen-data", "circles", "--classes", "3", "--train", "30", "--test", "9",
                         "--out", str(out)]) == 0
        assert len(read_csv(a / "train.csv")) == 30 and len(read_csv(a / "test.csv")) == 9
        assert (a / "train.csv").read_bytes() == (b / "train.csv").read_bytes()
        prov = json.loads((a / "provenance.json").read_text())
        assert prov["generator"] == "circles"
        assert "wrote 30 train rows and 9 test rows" in capsys.readouterr().out

    def test_digits(self, tmp_path):
        assert main(["gen-data", "digits", "--labels", "3,5", "--out", str(tmp_path)]) == 0
        assert len(read_csv(tmp_path / "train.csv")) == 329
        assert len(read_csv(tmp_path / "test.csv")) == 36

    def test_spirals_rejects_odd(self, tmp_path):
        assert main(["gen-data", "spirals", "--train", "31", "--test", "8", "--out", str(tmp_path)]) == 1


class TestTrain:
    def test_outputs(self, trained_run):
        _, _, out = trained_run
        rows = read_metrics(out / "metrics.csv")
        assert [r["epoch"] for r in rows] == [1, 2]
        assert all(r["wall_ms"] is None for r in rows)
        for name in ("checkpoint.json", "provenance.json"):
            assert (out / name).is_file()

    def test_single_epoch(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o"), "--epochs", "1",
                     "--qubits", "1"]) == 0
        assert len(read_metrics(tmp_path / "o" / "metrics.csv")) == 1

    def test_byte_identical_reruns(self, trained_run, tmp_path):
        _, cfg, out = trained_run
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "again"), *FAST]) == 0
        for name in ("metrics.csv", "checkpoint.json", "provenance.json"):
            assert (out / name).read_bytes() == (tmp_path / "again" / name).read_bytes()

    def test_snapshots(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "output.snapshot_samples = 6\n")
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o"), *FAST, "--snapshots"]) == 0
        frames = sorted((tmp_path / "o" / "overlap").glob("overlap_*.pgm"))
        assert len(frames) == 4 + 1
        assert read_pgm(frames[0]).shape == (6, 6)
        assert "overlap_frames = 5" in capsys.readouterr().out

    def test_unknown_key_is_invalid(self, tmp_path):
        cfg = write_config(tmp_path, "train.epoch = 3\n")
        assert main(["train", "--config", str(cfg)]) == 1

    def test_bad_flag_is_invalid(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--bogus"])
        assert exc.value.code == 1

    def test_degenerate_embedding_is_runtime_failure(self, tmp_path):
        cfg = write_config(tmp_path, "train.w_init_scale = 0.0\ntrain.loss_kind = 'neg_min_over_spread'\n")
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o"), *FAST]) == 2


class TestEvalPredict:
    def test_eval_on_training_split_matches_final_accuracy(self, trained_run, capsys):
        tmp, cfg, out = trained_run
        final = read_metrics(out / "metrics.csv")[-1]["train_accuracy"]
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(out / "checkpoint.json"), "--config", str(cfg),
                     "--split", "train", "--out", str(tmp / "ev")]) == 0
        assert f"accuracy = {final!r}" in capsys.readouterr().out
        report = json.loads((tmp / "ev" / "eval.json").read_text())
        assert report["samples"] == 24 and np.sum(report["confusion"]) == 24

    def test_eval_needs_data(self, trained_run):
        assert main(["eval", "--checkpoint", str(trained_run[2] / "checkpoint.json")]) == 1

    def test_predict_matches_eval(self, trained_run, tmp_path, capsys):
        _, _, out = trained_run
        assert main(["gen-data", "circles", "--train", "10", "--test", "4", "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        assert main(["predict", "--checkpoint", str(out / "checkpoint.json"), "--data", str(tmp_path / "test.csv"),
                     "--output", str(tmp_path / "pred.txt")]) == 0
        labels = capsys.readouterr().out.split()
        assert len(labels) == 4 and (tmp_path / "pred.txt").read_text().split() == labels

    def test_predict_single_vector(self, trained_run, capsys):
        assert main(["predict", "--checkpoint", str(trained_run[2] / "checkpoint.json"),
                     "--features", "0.1,-0.4"]) == 0
        assert capsys.readouterr().out.strip() in ("0", "1")

    def test_predict_empty_input(self, trained_run, tmp_path, capsys):
        (tmp_path / "empty.csv").write_text("")
        assert main(["predict", "--checkpoint", str(trained_run[2] / "checkpoint.json"),
                     "--data", str(tmp_path / "empty.csv")]) == 0
        assert capsys.readouterr().out == ""

    def test_predict_malformed_row(self, trained_run, tmp_path, capsys):
        (tmp_path / "bad.csv").write_text("0.1,0.2\n0.1,oops\n")
        assert main(["predict", "--checkpoint", str(trained_run[2] / "checkpoint.json"),
                     "--data", str(tmp_path / "bad.csv")]) == 1
        assert "row 2" in capsys.readouterr().err

    def test_predict_wrong_width(self, trained_run):
        assert main(["predict", "--checkpoint", str(trained_run[2] / "checkpoint.json"),
                     "--features", "1,2,3,4"]) == 1


class TestGradCheck:
    def test_pass(self, capsys):
        assert main(["grad-check", "--instances", "3", "--losses", "neg_sum"]) == 0
        out = capsys.readouterr().out
        assert out.count("neg_sum") == 3 and "PASS" in out

    def test_fail_exit_code(self, capsys):
        assert main(["grad-check", "--instances", "2", "--threshold", "0"]) == 3
        assert "FAIL" in capsys.readouterr().out

    def test_unknown_loss(self):
        assert main(["grad-check", "--losses", "hinge"]) == 1


class TestScalingSweep:
    def test_single_seed_matches_train(self, trained_run, tmp_path, capsys):
        _, cfg, out = trained_run
        assert main(["scaling-sweep", "--config", str(cfg), "--out", str(tmp_path), "--epochs", "2",
                     "--qubits", "1", "2", "--seeds", "0"]) == 0
        lines = (tmp_path / "scaling.csv").read_text().splitlines()
        assert lines[0] == "n_qubits,n_runs,failed,train_mean,train_std,test_mean,test_std"
        assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]
        row = lines[2].split(",")
        assert float(row[3]) == read_metrics(out / "metrics.csv")[-1]["train_accuracy"]
        assert float(row[4]) == 0.0
