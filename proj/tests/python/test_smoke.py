import json
import os
import pathlib

import numpy as np
import pytest

import assg

CONFIGS = pathlib.Path(os.environ.get("ASSG_SOURCE_DIR", pathlib.Path(__file__).parents[2])) / "configs"


def test_iou_hand_cases():
    assert assg.temporal_iou(2, 5, 4, 9) == 0.25
    assert assg.temporal_iou(3, 7, 3, 7) == 1.0
    assert assg.temporal_iou(0, 2, 3, 5) == 0.0


def test_nms_keeps_best_and_drops_overlap():
    kept = assg.nms([(1, 0, 9, 0.9), (1, 1, 9, 0.8), (2, 0, 9, 0.7)], 0.5)
    assert kept == [(1, 0, 9, 0.9), (2, 0, 9, 0.7)]
    with pytest.raises(ValueError):
        assg.nms([(1, 5, 2, 0.1)], 0.5)


def test_average_precision():
    truth = [("a", 3, 8)]
    assert assg.average_precision([("a", 20, 25, 0.9), ("a", 3, 8, 0.5)], truth, 0.5) == 0.5
    assert assg.average_precision([], truth, 0.5) == 0.0
    assert assg.average_precision([("a", 3, 8, 0.5)], [], 0.5) is None


def test_growing_sweep():
    h = np.array([[0.9, 0.004, 0.01, 0.005, 0.9], [0.1, 0.996, 0.99, 0.995, 0.1]])
    assert assg.grow_step(h, [-1, -1, 1, -1, -1], 0.99, 0.99) == [-1, 1, 1, 1, -1]


def test_fusion_and_detection():
    rgb = np.array([[0.9, 0.1, 0.1, 0.9], [0.1, 0.9, 0.9, 0.1]])
    flow = np.array([[0.5, 0.5, 0.5, 0.5], [0.5, 0.5, 0.5, 0.5]])
    assert np.array_equal(assg.fuse_heatmaps(rgb, flow, 1.0), rgb)
    fused = assg.fuse_heatmaps(rgb, flow, 0.5)
    assert np.allclose(fused.sum(axis=0), 1.0)
    dets = assg.detect(rgb, thresholds=[0.5])
    assert dets == [(1, 1, 2, pytest.approx(0.9))]


def test_config_errors_are_value_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"gen": {"bogus": 1}}))
    with pytest.raises(assg.ConfigError):
        assg.load_config(bad)
    assert issubclass(assg.ConfigError, ValueError)


def test_pipeline_end_to_end(tmp_path):
    cfg = json.loads((CONFIGS / "smoke.json").read_text())
    cfg["output_dir"] = str(tmp_path / "out")
    path = tmp_path / "smoke.json"
    path.write_text(json.dumps(cfg))
    assert assg.load_config(path)["gen"]["num_classes"] == 3

    with pytest.raises(assg.FormatError):
        assg.run("detect", str(path))
    for verb in ["gen", "train-baseline", "seed"]:
        assg.run(verb, str(path))
    assg.run("train", str(path), stream="rgb")
    assg.run("train", str(path), stream="flow")
    assg.run("detect", str(path))
    report = assg.evaluate(path)
    assert 0.0 <= report["ave_map"] <= 1.0
    assert len(report["per_threshold"]) == 5

    manifest = json.loads((tmp_path / "out" / "corpus" / "manifest.json").read_text())
    assert manifest
    ckpt = tmp_path / "out" / "train" / "rgb.ckpt"
    h = assg.heatmap(str(ckpt), np.random.default_rng(0).normal(size=(12, 8)))
    assert h.shape == (4, 12)
    assert np.allclose(h.sum(axis=0), 1.0)
