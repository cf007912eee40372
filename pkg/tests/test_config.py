import pytest

from archsynth.config import Config, load_config
from archsynth.errors import SchemaError


def test_builtin_defaults():
    config = load_config()
    assert config.param_budget == 7_000_000
    assert config.max_iterations == 4
    assert config.max_llm_calls == 20


def test_file_values_and_thresholds(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(
        "param_budget: 5000000\nmodel_id: other-model\n"
        "thresholds:\n  sparse_scene_fraction: 0.3\n"
    )
    config = load_config(path)
    assert config.param_budget == 5_000_000
    assert config.model_id == "other-model"
    assert config.thresholds.sparse_scene_fraction == 0.3
    # unspecified threshold fields keep their defaults
    assert config.thresholds.scale_variation_ratio == 4.0


def test_flag_overrides_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("param_budget: 5000000\n")
    config = load_config(path, param_budget=3_000_000)
    assert config.param_budget == 3_000_000


def test_none_overrides_ignored(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("max_iterations: 2\n")
    assert load_config(path, max_iterations=None).max_iterations == 2


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("param_budgget: 1\n")
    with pytest.raises(SchemaError, match="unknown config key"):
        load_config(path)


def test_unknown_threshold_rejected(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("thresholds:\n  nope: 1\n")
    with pytest.raises(SchemaError, match="unknown threshold"):
        load_config(path)


def test_empty_file_is_defaults(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("")
    assert load_config(path) == Config()


def test_invalid_values_rejected():
    with pytest.raises(SchemaError):
        Config(param_budget=0)
    with pytest.raises(SchemaError):
        Config(max_iterations=0)
