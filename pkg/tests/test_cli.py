import hashlib
import json

import numpy as np
import pytest
from PIL import Image

from codnet.cli import main
from codnet.data import load_manifest, save_sample, synth_samples
from codnet.trainer import TrainConfig, train

from conftest import SMALL


def _digest(folder):
    h = hashlib.sha256()
    for p in sorted(folder.rglob("*.png")):
        h.update(p.relative_to(folder).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    cfg = TrainConfig(lr=1e-3, weight_decay=1e-4, batch_size=4, epochs=1, input_size=32, backbone=SMALL,
                      val_fraction=0.0, out_dir=str(out))
    return train(cfg, train_data=synth_samples(4, 32, 0.5, seed=0)).checkpoint


@pytest.fixture
def images(tmp_path):
    root = tmp_path / "data"
    for s in synth_samples(3, 64, 0.5, seed=5):
        save_sample(s, root)
    return root


def test_synth_writes_triples_reproducibly(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--out", str(a), "--count", "10", "--size", "64", "--seed", "3"]) == 0
    assert main(["synth", "--out", str(b), "--count", "10", "--size", "64", "--seed", "3"]) == 0
    for sub in ("Imgs", "GT", "Edge"):
        assert len(list((a / sub).glob("*.png"))) == 10
    assert _digest(a) == _digest(b)
    assert len(load_manifest(a, "train")) == 10


def test_synth_rejects_bad_size(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--size", "50"]) == 1
    assert "divisible by 32" in capsys.readouterr().err


def test_predict_writes_maps_and_edges(tmp_path, images, checkpoint):
    out = tmp_path / "pred"
    assert main(["predict", "--checkpoint", str(checkpoint), "--input", str(images / "Imgs"), "--out", str(out)]) == 0
    assert len(list(out.glob("*.png"))) == 3
    out2 = tmp_path / "pred2"
    assert main(["predict", "--checkpoint", str(checkpoint), "--input", str(images / "Imgs"), "--out", str(out2),
                 "--save-edges"]) == 0
    assert len(list(out2.glob("*.png"))) == 6
    stem = sorted(out.glob("*.png"))[0]
    assert Image.open(stem).size == (64, 64) and Image.open(stem).mode == "L"
    assert (out / stem.name).read_bytes() == (out2 / stem.name).read_bytes()


def test_predict_overlay(tmp_path, images, checkpoint):
    out = tmp_path / "pred"
    args = ["predict", "--checkpoint", str(checkpoint), "--input", str(images / "Imgs"), "--out", str(out),
            "--overlay", "--gt", str(images / "GT")]
    assert main(args) == 0
    overlays = sorted(out.glob("*_overlay.png"))
    assert len(overlays) == 3 and Image.open(overlays[0]).size == (192, 64)


def test_predict_empty_directory(tmp_path, checkpoint, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code = main(["predict", "--checkpoint", str(checkpoint), "--input", str(empty), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "no inputs" in capsys.readouterr().err


def test_metrics_self_evaluation(tmp_path, images, capsys):
    assert main(["metrics", "--pred", str(images / "GT"), "--gt", str(images / "GT"),
                 "--out", str(tmp_path / "rep")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["aggregate"] == {"s_alpha": 1.0, "e_phi": 1.0, "wf_beta": 1.0, "mae": 0.0}
    header = (tmp_path / "rep.csv").read_text().splitlines()[0]
    assert header == "id,s_alpha,e_phi,wf_beta,mae"


def test_metrics_reports_unmatched_names(tmp_path, images, capsys):
    pred = tmp_path / "pred"
    pred.mkdir()
    Image.fromarray(np.zeros((64, 64), np.uint8)).save(pred / "other.png")
    assert main(["metrics", "--pred", str(pred), "--gt", str(images / "GT"), "--out", str(tmp_path / "r")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["count"] == 0 and len(summary["errors"]) == 4


def test_eval_command(tmp_path, images, checkpoint, capsys):
    assert main(["eval", "--checkpoint", str(checkpoint), "--data-root", str(images),
                 "--out", str(tmp_path / "ev")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["count"] == 3 and 0 <= summary["aggregate"]["mae"] <= 1


def test_train_command(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "input_size: 32\nbatch_size: 4\nepochs: 1\nlr: 0.001\nval_fraction: 0.0\n"
        "backbone: {channel_schedule: [8, 16, 24, 32]}\n"
        "dataset: {kind: synthetic, count: 4, size: 32}\n"
    )
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out-dir", str(out), "--variant", "M2", "--seed", "1"]) == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert result["final"]["steps"] == 1
    assert (out / "last.pt").exists() and (out / "train_log.jsonl").exists()


def test_help_lists_flags(capsys):
    assert main(["predict", "--help"]) == 0
    text = capsys.readouterr().out
    for flag in ("--checkpoint", "--input", "--out", "--save-edges", "--overlay", "--seed", "--config"):
        assert flag in text


@pytest.mark.parametrize("argv", [["bogus"], ["synth"], ["train", "--variant", "M9"], ["train", "--input-size", "33"]])
def test_usage_errors_exit_1(argv):
    assert main(argv) == 1
