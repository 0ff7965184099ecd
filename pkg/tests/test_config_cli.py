import csv
import logging

import numpy as np
import pytest

from amdnet.cli import main
from amdnet.config import SCHEMA, RunConfig, describe_keys, parse_config
from amdnet.datasets import write_synthetic_tree
from amdnet.exceptions import ConfigError
from amdnet.metrics import parse_report_csv
from amdnet.model import ModelSpec

TINY_INI = """\
[dataset]
assess = false

[model]
input_size = 64
filters = [4, 4, 8, 8, 8, 8]
lstm_units = 16
fc_units = 8

[train]
epochs = 2
batch_size = 8
"""


def write_config(path, extra=""):
    path.write_text(TINY_INI + extra)
    return path


class TestConfig:
    def test_defaults(self, monkeypatch):
        monkeypatch.delenv("AMDNET_CONFIG", raising=False)
        cfg = parse_config()
        assert cfg.model_spec() == ModelSpec()
        assert cfg["clahe.grid"] == [8, 8] and cfg["train.learning_rate"] == 0.001
        assert set(cfg.provenance.values()) == {"default"}

    def test_empty_file(self, tmp_path):
        (tmp_path / "e.ini").write_text("")
        assert parse_config(tmp_path / "e.ini").values == RunConfig.defaults().values

    def test_file_and_provenance(self, tmp_path):
        cfg = parse_config(write_config(tmp_path / "c.ini", "[gamma]\nenabled = true\nvalue = 0.8\n"))
        assert cfg.model_spec().filters == (4, 4, 8, 8, 8, 8)
        assert cfg.provenance["model.input_size"] == "user"
        assert cfg.provenance["clahe.clip_limit"] == "default"
        assert cfg.enhance_params().gamma == 0.8 and cfg.enhance_params().size == 64
        assert cfg.train_config().epochs == 2

    def test_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AMDNET_CONFIG", str(write_config(tmp_path / "c.ini")))
        assert parse_config()["train.epochs"] == 2

    def test_int_promoted_to_float(self, tmp_path):
        (tmp_path / "c.ini").write_text("[clahe]\nclip_limit = 3\n")
        value = parse_config(tmp_path / "c.ini")["clahe.clip_limit"]
        assert value == 3.0 and isinstance(value, float)

    def test_augment_disabled(self, tmp_path):
        (tmp_path / "c.ini").write_text("[augment]\nenabled = no\n")
        assert parse_config(tmp_path / "c.ini").augment_config() is None

    def test_recalibration_toggle(self, tmp_path, monkeypatch):
        monkeypatch.delenv("AMDNET_CONFIG", raising=False)
        assert parse_config().train_config().recalibrate_bn is True
        (tmp_path / "c.ini").write_text("[train]\nrecalibrate_bn = no\n")
        assert parse_config(tmp_path / "c.ini").train_config().recalibrate_bn is False

    @pytest.mark.parametrize("text, key", [
        ("[model]\nwidth = 3\n", "model.width"),
        ("[clahe]\nclip_limit = -1\n", "clahe.clip_limit"),
        ("[train]\ndecay_rate = 1.5\n", "train.decay_rate"),
        ("[augment]\np_hflip = yes\n", "augment.p_hflip"),
        ("[dataset]\ntest_fraction = 0\n", "dataset.test_fraction"),
        ("[extras]\nx = 1\n", "extras"),
    ])
    def test_rejections_name_the_key(self, tmp_path, text, key):
        (tmp_path / "c.ini").write_text(text)
        with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
            parse_config(tmp_path / "c.ini")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "missing.ini")

    def test_describe_keys(self):
        text = describe_keys()
        assert len(text.splitlines()) == sum(len(k) for k in SCHEMA.values())
        assert "clahe.clip_limit = 2.0  [published]" in text
        assert "quality.min_sharp = 15.0  [chosen]" in text
        assert "train.recalibrate_bn = True  [chosen]" in text


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """A trained tiny-spec run directory shared by the CLI tests."""
    base = tmp_path_factory.mktemp("cli")
    data = write_synthetic_tree(base / "fundus", n_per_class=5, size=64, seed=1)
    cfg = write_config(base / "tiny.ini")
    out = base / "out"
    assert main(["--config", str(cfg), "--out-dir", str(out), "train", "--data", str(data)]) == 0
    return base, data, cfg, out


class TestCli:
    def test_help_lists_keys(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for sec, keys in SCHEMA.items():
            for k in keys:
                assert f"{sec}.{k} = " in text
        assert "[published]" in text and "[chosen]" in text

    def test_train_artifacts(self, run):
        _, _, _, out = run
        for name in ("manifest.csv", "split.json", "model.ckpt", "history.csv"):
            assert (out / name).is_file()
        rows = list(csv.DictReader(open(out / "history.csv")))
        assert [r["epoch"] for r in rows] == ["0", "1"]
        assert float(rows[1]["lr"]) == pytest.approx(0.00095)
        assert rows[0]["val_acc"] != ""

    def test_eval(self, run, capsys):
        _, _, cfg, out = run
        code = main(["--config", str(cfg), "--out-dir", str(out), "eval"])
        assert code == 0
        rows, footer = parse_report_csv((out / "metrics.csv").read_text())
        assert len(rows) == 4 and 0.0 <= footer["accuracy"] <= 1.0
        assert "accuracy:" in capsys.readouterr().out

    def test_eval_floor(self, run, tmp_path):
        _, _, _, out = run
        cfg = write_config(tmp_path / "floor.ini", "accuracy_floor = 1.0\n")
        code = main(["--config", str(cfg), "--out-dir", str(out), "eval"])
        _, footer = parse_report_csv((out / "metrics.csv").read_text())
        assert code == (3 if footer["accuracy"] < 1.0 else 0)

    def test_predict(self, run, capsys):
        _, data, cfg, out = run
        image = sorted((data / "AMD").iterdir())[0]
        assert main(["--config", str(cfg), "--out-dir", str(out), "predict", str(image)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        probs = [float(line.split(",")[1]) for line in lines[:4]]
        assert [line.split(",")[0] for line in lines[:4]] == ["AMD", "Cataract", "Diabetes", "Normal"]
        assert sum(probs) == pytest.approx(1.0, abs=1e-5)
        assert lines[4].startswith("label,")

    def test_spec_mismatch_is_error(self, run, capsys):
        _, _, _, out = run
        assert main(["--out-dir", str(out), "eval"]) == 1
        assert "was written for" in capsys.readouterr().err

    def test_missing_checkpoint(self, tmp_path, capsys):
        assert main(["--out-dir", str(tmp_path), "eval"]) == 1
        assert "amdnet train" in capsys.readouterr().err

    def test_bad_config_exit_code(self, tmp_path, capsys):
        (tmp_path / "bad.ini").write_text("[train]\nepochs = -3\n")
        assert main(["--config", str(tmp_path / "bad.ini"), "show-config"]) == 2
        assert "train.epochs" in capsys.readouterr().err

    def test_seed_override(self, tmp_path, capsys):
        assert main(["--seed", "9", "show-config"]) == 0
        out = capsys.readouterr().out
        assert "train.seed = 9  (user)" in out and "dataset.seed = 9  (user)" in out

    def test_assess(self, run, tmp_path):
        _, data, _, _ = run
        assert main(["--out-dir", str(tmp_path), "assess", str(data)]) == 0
        rows = list(csv.DictReader(open(tmp_path / "quality.csv")))
        assert len(rows) == 20
        assert set(rows[0]) == {"filename", "sharpness", "illumination", "contrast", "decision", "reason"}
        assert all(r["decision"] in ("accept", "reject") for r in rows)

    def test_enhance(self, run, tmp_path, caplog):
        _, data, _, _ = run
        cfg = tmp_path / "e.ini"
        cfg.write_text("[model]\ninput_size = 64\n[gamma]\nenabled = true\nvalue = 1.5\n")
        with caplog.at_level(logging.INFO, logger="amdnet"):
            assert main(["--config", str(cfg), "--out-dir", str(tmp_path), "enhance", str(data)]) == 0
        assert any("gamma(1.5)" in r.getMessage() for r in caplog.records)
        pngs = sorted((tmp_path / "enhanced").rglob("*.png"))
        assert len(pngs) == 20
        rows = list(csv.DictReader(open(tmp_path / "fidelity.csv")))
        assert len(rows) == 20 and all(float(r["mse"]) > 0 and -1 <= float(r["ssim"]) <= 1 for r in rows)

    def test_threads_flag(self, capsys):
        assert main(["--threads", "1", "show-config"]) == 0
