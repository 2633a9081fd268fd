import math
from dataclasses import replace

import numpy as np
import pytest

from ipssd.errors import ConfigError, ContractViolation, DataError
from ipssd.pipeline import (PipelineConfig, bench, build_model, check_input_size,
                            detections_digest, format_config, load_config, parse_config,
                            random_weights, run_pipeline, shape_table, weight_manifest,
                            zero_weights)
from ipssd.pyramid import PyramidConfig

SMALL = parse_config("""
pyramid.ipn_channels = 4
pyramid.ipn_mid_channels = 4
input.channels = 1
backbone.channels = 4, 4, 4, 4, 4, 4, 4
anchors.scales = 32
anchors.ratios = 1, 2
anchors.angles_deg = 0, 90
fusion.common_channels = 4
rpn.mid_channels = 4
head.hidden = 8
pool.height = 3
pool.width = 3
""")


@pytest.fixture(scope="module")
def default_blank_run():
    cfg = PipelineConfig()
    trace = {}
    dets = run_pipeline(np.zeros((640, 640, 3), np.uint8), model=build_model(cfg, zero_weights(cfg)),
                        trace=trace)
    return cfg, dets, trace


def test_blank_image_with_zero_weights_detects_nothing(default_blank_run):
    _, dets, trace = default_blank_run
    assert dets == [] and trace["detections"] == 0


def test_stage_shapes_match_shape_table(default_blank_run):
    cfg, _, trace = default_blank_run
    table = shape_table(cfg, 640, 640)
    for key, shape in table.items():
        assert tuple(trace[key]) == shape, key
    assert table["ssd.conv4"] == (1, 32, 160, 160)
    assert table["ssd.conv11"][2:] == (5, 5)
    assert table["rpn.stage1.deltas"] == (1, 5 * cfg.num_anchors, 160, 160)


def test_config_round_trip(tmp_path):
    cfg = replace(SMALL, classes=("plane", "ship"), score_threshold=0.25,
                  weights_path=str(tmp_path / "w.rdw"))
    text = format_config(cfg)
    assert parse_config(text) == cfg
    path = tmp_path / "c.cfg"
    path.write_text(format_config(replace(cfg, weights_path="w.rdw")))
    assert load_config(path).weights_path == str(tmp_path / "w.rdw")


def test_config_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("pyramid.depth = 3\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("just words\n")
    with pytest.raises(ConfigError):
        parse_config("pool.height = seven\n")
    with pytest.raises(ConfigError):
        PipelineConfig(pyramid=PyramidConfig(n=3))
    with pytest.raises(ConfigError):
        PipelineConfig(backbone_channels=(4, 4))
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.cfg")


def test_missing_weights_are_listed():
    params = zero_weights(SMALL)
    del params["ipn.conv2.weight"]
    del params["cls.fc1.bias"]
    with pytest.raises(DataError, match="ipn.conv2.weight.*cls.fc1.bias"):
        build_model(SMALL, params)


def test_wrong_weight_shape():
    params = zero_weights(SMALL)
    params["ipn.conv1.weight"] = np.zeros((3, 3))
    with pytest.raises(ContractViolation, match="ipn.conv1.weight"):
        build_model(SMALL, params)


def test_manifest_matches_zero_weights():
    params = zero_weights(SMALL)
    assert set(params) == set(weight_manifest(SMALL))
    assert all(params[k].size == math.prod(s) for k, s in weight_manifest(SMALL).items())


def test_input_size_check():
    check_input_size(64, 128, SMALL)
    for h, w in ((60, 64), (32, 64)):
        with pytest.raises(ContractViolation):
            check_input_size(h, w, SMALL)


def test_random_weights_run_is_deterministic(rng):
    model = build_model(SMALL, random_weights(SMALL, seed=3))
    img = rng.integers(0, 256, (64, 64), dtype=np.uint8)
    trace = {}
    a = run_pipeline(img, model=model, source_id="x", trace=trace)
    b = run_pipeline(img, model=model, source_id="x")
    assert detections_digest(a) == detections_digest(b)
    assert [d.source_id for d in a] == ["x"] * len(a)
    assert all(tuple(trace[k]) == v for k, v in shape_table(SMALL, 64, 64).items())
    assert len(a) <= SMALL.max_detections
    assert [d.score for d in a] == sorted((d.score for d in a), reverse=True)


def test_bench_report():
    model = build_model(SMALL, zero_weights(SMALL))
    rep = bench([np.zeros((64, 64), np.uint8)], model=model, repeats=3)
    assert rep["images"] == 1 and rep["repeats"] == 3 and rep["deterministic"]
    for key in ("fps_inclusive", "fps_exclusive"):
        s = rep[key]
        assert len(s["samples"]) == 3 and min(s["samples"]) <= s["median"] <= max(s["samples"])
    with pytest.raises(ContractViolation):
        bench([np.zeros((64, 64), np.uint8)], model=model, repeats=2)
