"""Experiment config parsing and field-level validation messages."""

import json

import pytest

from disentangler.config import (ConfigError, load_experiment_config,
                                 parse_experiment_config)

MINIMAL = {
    "network": {"image_dim": 256, "target_dim": 7, "latent_dim": 8,
                "target_kind": "multilabel"},
}


def test_minimal_config_fills_defaults():
    cfg = parse_experiment_config(json.loads(json.dumps(MINIMAL)))
    assert cfg.network.image_dim == 256
    assert cfg.training.mode == "multilabel"
    assert cfg.training.batch_size == 100
    assert cfg.training.weights.lambda_adv == 0.01
    assert cfg.data.kind == "glyphs"
    # image_dim 256 implies a 16 x 16 canvas for the default corpus
    assert cfg.data.glyphs.side == 16
    assert cfg.data.glyphs.mode == "multilabel"


def test_required_network_fields():
    with pytest.raises(ConfigError, match="network.latent_dim"):
        parse_experiment_config(
            {"network": {"image_dim": 256, "target_dim": 5,
                         "target_kind": "multilabel"}})
    with pytest.raises(ConfigError, match="network: required section"):
        parse_experiment_config({})


def test_unknown_field_named():
    raw = json.loads(json.dumps(MINIMAL))
    raw["training"] = {"learning_rat": 1e-3}
    with pytest.raises(ConfigError, match=r"training\.learning_rat"):
        parse_experiment_config(raw)


def test_unknown_section_named():
    raw = json.loads(json.dumps(MINIMAL))
    raw["optimizer"] = {}
    with pytest.raises(ConfigError, match="optimizer"):
        parse_experiment_config(raw)


def test_bad_value_carries_section_prefix():
    raw = json.loads(json.dumps(MINIMAL))
    raw["training"] = {"batch_size": 1}
    with pytest.raises(ConfigError, match="training: batch_size"):
        parse_experiment_config(raw)


def test_bad_weight_value():
    raw = json.loads(json.dumps(MINIMAL))
    raw["training"] = {"weights": {"warmup_iterations": 0}}
    with pytest.raises(ConfigError, match=r"training\.weights"):
        parse_experiment_config(raw)


def test_mode_mismatch_rejected():
    raw = json.loads(json.dumps(MINIMAL))
    raw["training"] = {"mode": "multiclass"}
    with pytest.raises(ConfigError, match="training.mode"):
        parse_experiment_config(raw)


def test_glyph_side_must_match_image_dim():
    raw = json.loads(json.dumps(MINIMAL))
    raw["data"] = {"glyphs": {"side": 8, "mode": "multilabel"}}
    with pytest.raises(ConfigError, match=r"data\.glyphs\.side"):
        parse_experiment_config(raw)


def test_idx_data_needs_paths():
    raw = json.loads(json.dumps(MINIMAL))
    raw["data"] = {"kind": "idx"}
    with pytest.raises(ConfigError, match="data"):
        parse_experiment_config(raw)


def test_lists_become_tuples():
    raw = json.loads(json.dumps(MINIMAL))
    raw["network"]["attr_widths"] = [32, 16]
    raw["data"] = {"counts": [50, 10, 10],
                   "glyphs": {"side": 16, "mode": "multilabel",
                              "scale_grid": [0.5, 1.0]}}
    cfg = parse_experiment_config(raw)
    assert cfg.network.attr_widths == (32, 16)
    assert cfg.data.counts == (50, 10, 10)
    assert cfg.data.glyphs.scale_grid == (0.5, 1.0)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_experiment_config(tmp_path / "nope.json")


def test_load_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_experiment_config(path)


def test_load_valid_file(tmp_path):
    path = tmp_path / "ok.json"
    path.write_text(json.dumps(MINIMAL))
    cfg = load_experiment_config(path)
    assert cfg.network.target_dim == 7


def test_target_dim_must_match_glyph_labels():
    raw = json.loads(json.dumps(MINIMAL))
    raw["network"]["target_dim"] = 5
    with pytest.raises(ConfigError, match="network.target_dim"):
        parse_experiment_config(raw)


def test_round_trip_through_to_dict():
    cfg = parse_experiment_config(json.loads(json.dumps(MINIMAL)))
    again = parse_experiment_config(cfg.to_dict())
    assert again == cfg
