import logging

import pytest

from src.models.errors import ConfigError
from src.utils.config_loader import DEFAULT_CONFIG, ConfigLoader, parse_overrides


def test_missing_path_gives_defaults():
    assert ConfigLoader().load(None) == DEFAULT_CONFIG


def test_file_values_and_overrides_merge(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("Clusters: 4\nTerms: [edges, stability]\n", encoding="utf-8")
    config = ConfigLoader().load(path, strict=True, overrides={"Seed": 9})
    assert config["Clusters"] == 4
    assert config["Terms"] == ["edges", "stability"]
    assert config["Seed"] == 9
    assert config["TimeSteps"] == DEFAULT_CONFIG["TimeSteps"]


def test_strict_mode_names_key_and_line(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("Seed: 1\nClusters: three\n", encoding="utf-8")
    with pytest.raises(ConfigError, match=r"Clusters.*line 2"):
        ConfigLoader().load(path, strict=True)
    path.write_text("Seed: 1\nClustres: 3\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="unknown configuration key 'Clustres'"):
        ConfigLoader().load(path, strict=True)


def test_lenient_mode_warns_and_keeps_defaults(tmp_path, caplog):
    path = tmp_path / "run.yaml"
    path.write_text("Clusters: three\nSeed: 5\n", encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        config = ConfigLoader().load(path)
    assert config["Clusters"] == DEFAULT_CONFIG["Clusters"]
    assert config["Seed"] == 5
    assert "Clusters" in caplog.text


def test_invalid_yaml(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("Seed: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid YAML"):
        ConfigLoader().load(path, strict=True)
    assert ConfigLoader().load(path) == DEFAULT_CONFIG


def test_missing_file_is_an_error_only_when_strict(tmp_path):
    with pytest.raises(ConfigError):
        ConfigLoader().load(tmp_path / "nope.yaml", strict=True)
    assert ConfigLoader().load(tmp_path / "nope.yaml") == DEFAULT_CONFIG


def test_parse_overrides():
    assert parse_overrides(["Clusters=5", "Terms=edges,triangles", "Theta=[-2.0, 0.1]"]) == {
        "Clusters": 5, "Terms": "edges,triangles", "Theta": [-2.0, 0.1]}
    with pytest.raises(ConfigError):
        parse_overrides(["Clusters"])
    with pytest.raises(ConfigError):
        parse_overrides(["Clusters=many"])


def test_save_then_load(tmp_path):
    config = {**DEFAULT_CONFIG, "Seed": 42, "Preset": "slow-hard"}
    path = tmp_path / "saved.yaml"
    ConfigLoader().save(path, config)
    assert ConfigLoader().load(path, strict=True) == config
