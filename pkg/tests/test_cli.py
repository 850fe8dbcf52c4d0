import csv
import filecmp
import json

import numpy as np
import pytest

from conftest import sampled_label_archive
from uncal import RngStream, __version__, write_archive
from uncal.cli import main
from uncal.archive import LogitArchive

SMOKE_CONFIG = """\
classes = 4
input_dim = 8
n_train = 400
n_calib = 200
n_test = 300
n_ood = 200
class_separation = 6.0
label_noise = 0.1
hidden_units = 16
epochs = 3
mc_samples = 5
ood_batch = 50
ood_repeats = 5
rejection_steps = 11
scalers = temperature
seed = 0
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMOKE_CONFIG)
    return path


class TestBasics:
    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert capsys.readouterr().out.strip() == __version__

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["eval", "--bogus"]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        assert main(["eval", "--archive", str(tmp_path / "nope.ucal")]) == 2
        assert "eval" in capsys.readouterr().err


class TestCommandFlow:
    def test_train_sample_calibrate_eval_reject_ood(self, tmp_path, config_path, capsys):
        ckpt = tmp_path / "model.json"
        assert main(["train", "--config", str(config_path), "--out", str(ckpt)]) == 0
        assert ckpt.exists()

        test_arch = tmp_path / "test.ucal"
        calib_arch = tmp_path / "calib.ucal"
        ood_arch = tmp_path / "ood.ucal"
        for split, out in (("test", test_arch), ("calib", calib_arch), ("ood", ood_arch)):
            code = main([
                "sample", "--model", str(ckpt), "--config", str(config_path),
                "--split", split, "--out", str(out),
            ])
            assert code == 0
            assert out.exists()

        scaler_path = tmp_path / "temp.json"
        code = main([
            "calibrate", "--archive", str(calib_arch),
            "--method", "temperature", "--out", str(scaler_path),
        ])
        assert code == 0
        assert json.loads(scaler_path.read_text())["kind"] == "temperature"

        metrics_csv = tmp_path / "metrics.csv"
        code = main([
            "eval", "--archive", str(test_arch), "--scaler", str(scaler_path),
            "--out", str(metrics_csv),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "uce" in out and "accuracy" in out
        with open(metrics_csv) as f:
            rows = list(csv.reader(f))
        assert rows[0][:2] == ["method", "ece"]

        reject_csv = tmp_path / "reject.csv"
        assert main(["reject", "--archive", str(test_arch), "--out", str(reject_csv)]) == 0
        with open(reject_csv) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["h_max", "retained_fraction", "top1_error"]
        assert len(rows) == 1 + 51

        ood_csv = tmp_path / "ood.csv"
        code = main([
            "ood", "--archive", str(test_arch), "--ood-archive", str(ood_arch),
            "--out", str(ood_csv),
        ])
        assert code == 0
        with open(ood_csv) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["ood_fraction", "mean_uncertainty"]
        assert len(rows) == 1 + 11

    def test_calibrate_recovers_known_temperature(self, tmp_path):
        arch = sampled_label_archive(RngStream(0), 10_000, 4, 2.5)
        arch_path = tmp_path / "t25.ucal"
        write_archive(arch, arch_path)
        scaler_path = tmp_path / "t.json"
        code = main([
            "calibrate", "--archive", str(arch_path),
            "--method", "temperature", "--out", str(scaler_path),
        ])
        assert code == 0
        log_t = json.loads(scaler_path.read_text())["params"][0]
        assert 2.4 <= np.exp(log_t) <= 2.6

    def test_eval_one_hot_correct_archive_has_zero_uce(self, tmp_path, capsys):
        logits = np.zeros((20, 1, 4))
        labels = np.arange(20) % 4
        logits[np.arange(20), 0, labels] = 50.0
        write_archive(LogitArchive(logits, labels.astype(np.int64)), tmp_path / "oh.ucal")
        out_csv = tmp_path / "grid.csv"
        assert main(["eval", "--archive", str(tmp_path / "oh.ucal"), "--out", str(out_csv)]) == 0
        with open(out_csv) as f:
            header, row = list(csv.reader(f))
        grid = dict(zip(header, row))
        assert float(grid["uce"]) < 1e-12
        assert float(grid["accuracy"]) == 1.0


class TestPipelineCommand:
    def test_pipeline_requires_output_directory(self, config_path, capsys):
        assert main(["pipeline", "--config", str(config_path)]) == 1
        assert "output directory" in capsys.readouterr().err

    def test_pipeline_bundle_contents_and_determinism(self, tmp_path, config_path, capsys):
        out_a = tmp_path / "report_a"
        out_b = tmp_path / "report_b"
        assert main(["pipeline", "--config", str(config_path), "--out", str(out_a)]) == 0
        assert main(["pipeline", "--config", str(config_path), "--out", str(out_b)]) == 0
        names = {p.name for p in out_a.iterdir()}
        assert "metrics.csv" in names
        assert "run.json" in names
        assert "scalers.json" in names
        for method in ("uncalibrated", "conf_penalty", "temperature"):
            assert f"rejection_{method}.csv" in names
            assert f"ood_{method}.csv" in names
            for mode in ("confidence", "uncertainty"):
                assert f"reliability_{method}_{mode}.csv" in names
                assert f"reliability_{method}_{mode}.svg" in names
        match, mismatch, errors = filecmp.cmpfiles(
            out_a, out_b, sorted(names), shallow=False
        )
        assert sorted(match) == sorted(names)
        assert not mismatch and not errors
        meta = json.loads((out_a / "run.json").read_text())
        assert meta["version"] == __version__
        assert meta["seed"] == 0
