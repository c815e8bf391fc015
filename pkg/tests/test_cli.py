import json
from pathlib import Path

import numpy as np
import pytest

from metriclab.cli import main
from metriclab.config import ExperimentConfig, validate_config
from metriclab.datagen import Dataset, load_embeddings, save_embeddings, write_idx
from metriclab.errors import ParseError, ValidationError
from metriclab.numcore import RngStream

CONFIGS = Path(__file__).parent.parent / "configs"

SMALL = """
seed: 3
dataset:
  source: synthetic
  synthetic: {num_classes: 4, samples_per_class: 30, dim: 12}
architecture: {kind: mlp, layer_dims: [12, 16, 8]}
train: {epochs: 3, batch_size: 32}
analysis: {greediness_window: 2}
eval: {recall_ks: [1, 5, 10]}
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL)
    return path


class TestValidateConfig:
    def test_defaults(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("dataset:\n  source: synthetic\n")
        cfg = validate_config(path)
        assert cfg.train.lr == 1e-3 and cfg.train.weight_decay == 1e-5
        assert cfg.train.batch_size == 64 and cfg.train.epochs == 50
        assert cfg.train.margin == 1.0
        assert cfg.losses == ("contrastive", "triplet")
        assert cfg.synthetic.num_classes == 10 and cfg.synthetic.samples_per_class == 200

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("")
        assert validate_config(path).source == "synthetic"

    def test_negative_margin(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("train:\n  margin: -1\n")
        with pytest.raises(ValidationError, match="margin"):
            validate_config(path)

    def test_missing_idx_path(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(
            "dataset:\n  source: idx\n  idx:\n    train_images: nope\n    train_labels: nope\n"
            "    test_images: nope\n    test_labels: nope\n"
        )
        with pytest.raises(ValidationError, match="not found"):
            validate_config(path)

    def test_parse_error_has_line(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("seed: 1\ntrain: [unclosed\n")
        with pytest.raises(ParseError, match="line"):
            validate_config(path)

    def test_unknown_fields(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("train:\n  momentum: 0.9\n")
        with pytest.raises(ValidationError, match="momentum"):
            validate_config(path)

    def test_seed_propagates(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("seed: 17\n")
        cfg = validate_config(path)
        assert cfg.synthetic.seed == 17 and cfg.train.seed == 17
        assert cfg.with_overrides(seed=4).synthetic.seed == 4

    @pytest.mark.parametrize("name", ["synthetic.yaml", "embeddings.yaml", "mnist.yaml"])
    def test_committed_configs_parse(self, name, tmp_path):
        import yaml

        doc = yaml.safe_load((CONFIGS / name).read_text())
        if doc["dataset"]["source"] == "synthetic":
            cfg = validate_config(CONFIGS / name)
            assert cfg.architecture.layer_dims == (128, 64, 32)
            return
        # point file references at stand-ins so validation can run
        files = {}
        for key, val in doc["dataset"][doc["dataset"]["source"]].items():
            if isinstance(val, str):
                (tmp_path / key).write_bytes(b"")
                files[key] = str(tmp_path / key)
        doc["dataset"][doc["dataset"]["source"]].update(files)
        path = tmp_path / name
        path.write_text(yaml.safe_dump(doc))
        cfg = validate_config(path)
        assert cfg.architecture.kind in ("cnn", "head")


class TestCommands:
    def test_compare_losses_outputs(self, small_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["compare-losses", "--config", str(small_config), "--out", str(out), "--quiet"]) == 0
        report = json.loads((out / "report.json").read_text())
        for loss in ("contrastive", "triplet"):
            r = report["losses"][loss]
            assert {"intra_mean", "intra_var", "inter_mean_dist", "inter_var"} <= set(r["variance"])
            assert {"decay_epoch", "mean_active_ratio", "mean_grad_norm"} <= set(r["greediness"])
            assert 0.0 <= r["knn_accuracy"] <= 1.0
            assert set(r["recall"]["recall_at"]) == {"1", "5", "10"}
            for name in r["files"].values():
                assert (out / name).is_file()
            header = (out / f"trace_{loss}.csv").read_text().splitlines()[0]
            assert header == "epoch,mean_loss,active_ratio,grad_norm"
            assert (out / f"pca_{loss}.csv").read_text().startswith("label,pc1,pc2\n")
            assert (out / f"pca_{loss}.svg").read_text().startswith("<svg")
        assert "p" in report["comparison"]["t_test"]
        assert "Greediness" in capsys.readouterr().out

    def test_byte_identical_reruns(self, small_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["compare-losses", "--config", str(small_config), "--out", str(a), "--quiet"]) == 0
        assert main(["compare-losses", "--config", str(small_config), "--out", str(b), "--quiet"]) == 0
        for name in ("report.json", "trace_triplet.csv", "pca_contrastive.csv", "checkpoint_triplet.bin"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_and_loss_flags(self, small_config, tmp_path):
        out = tmp_path / "r"
        assert main(["compare-losses", "--config", str(small_config), "--out", str(out), "--seed", "9",
                     "--loss", "triplet", "--epochs", "2", "--quiet"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert list(report["losses"]) == ["triplet"]
        assert report["config"]["seed"] == 9 and report["config"]["train"]["epochs"] == 2

    def test_stepwise_subcommands(self, small_config, tmp_path, capsys):
        out = tmp_path / "s"
        base = ["--config", str(small_config), "--out", str(out), "--quiet"]
        assert main(["generate"] + base) == 0
        assert load_embeddings(out / "train.emb1").features.shape[1] == 12
        assert main(["train"] + base) == 0
        assert (out / "checkpoint_contrastive.bin").is_file()
        assert main(["analyze"] + base) == 0
        assert "intra_ratio" in json.loads((out / "analysis.json").read_text())["comparison"]
        assert main(["eval"] + base) == 0
        assert set(json.loads((out / "eval.json").read_text())) == {"contrastive", "triplet"}
        assert main(["report"] + base) == 2  # no report.json yet
        assert main(["compare-losses"] + base) == 0
        assert main(["report"] + base) == 0
        assert "Variance structure" in capsys.readouterr().out

    def test_stage_failure_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text(SMALL.replace("layer_dims: [12, 16, 8]", "layer_dims: [13, 16, 8]"))
        assert main(["compare-losses", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == 2
        assert "stage 'train:contrastive'" in capsys.readouterr().err

    def test_config_failure_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("train:\n  margin: -1\n")
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "margin" in capsys.readouterr().err


def test_idx_source_pipeline(tmp_path):
    rng = RngStream(0)
    # two blob classes drawn as 8x8 images
    def images(n, labels):
        base = np.zeros((n, 8, 8))
        for i, lab in enumerate(labels):
            base[i, :4, :4] += 200 if lab == 0 else 0
            base[i, 4:, 4:] += 200 if lab == 1 else 0
        return np.clip(base + 40 * rng.uniform((n, 8, 8)), 0, 255)

    ytr, yte = np.tile([0, 1], 20), np.tile([0, 1], 6)
    write_idx(images(40, ytr), ytr, tmp_path / "tri", tmp_path / "trl")
    write_idx(images(12, yte), yte, tmp_path / "tei", tmp_path / "tel")
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        "dataset:\n  source: idx\n  idx: {train_images: tri, train_labels: trl, test_images: tei, test_labels: tel}\n"
        "architecture: {kind: cnn, layer_dims: [16, 8], conv_spec: {image_size: 8, channels: [2, 3]}}\n"
        "train: {epochs: 2, batch_size: 8}\nanalysis: {greediness_window: 2}\neval: {recall_ks: [1, 3]}\n"
    )
    assert main(["compare-losses", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["config"]["architecture"]["kind"] == "cnn"


def test_embedding_source_pipeline(tmp_path):
    rng = RngStream(1)
    centres = rng.normal((3, 10)) * 3
    y = np.repeat(np.arange(3), 20)
    feats = centres[y] + rng.normal((60, 10))
    save_embeddings(Dataset(feats, y), tmp_path / "all.emb1")
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        "dataset:\n  source: embeddings\n  embeddings: {train: all.emb1}\n"
        "architecture: {kind: head, layer_dims: [10, 16]}\n"
        "train: {epochs: 2, batch_size: 16}\nanalysis: {greediness_window: 2}\neval: {recall_ks: [1, 5]}\n"
    )
    assert main(["compare-losses", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["dataset"]["n_train"] + report["dataset"]["n_test"] == 60


def test_default_config_object():
    cfg = ExperimentConfig()
    assert cfg.train.epochs == 50 and cfg.recall_ks == (1, 5, 10) and cfg.knn_k == 5
