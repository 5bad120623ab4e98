"""Tests for the YAML configuration layer of the runner."""

import os
from pathlib import Path

import pytest

from mew_runner.config_loader import Config, default_config_path, get_config
from mew_unet.errors import ConfigError

PROJECT_CONFIG = Path(__file__).parent.parent / "config.yaml"


def write(tmp_path, text):
    path = tmp_path / "config.yaml"
    path.write_text(text)
    return path


class TestConfig:
    def test_project_config_builds(self):
        config = Config(str(PROJECT_CONFIG))
        assert config.model_config().branch_mask.to_string() == "dw,hw,cw,ch"
        assert config.train_config().optimizer == "adamw"
        assert config.texture_spec().noise == pytest.approx(0.01)

    @pytest.mark.parametrize("name", ["isic_scale.yaml", "synapse_scale.yaml"])
    def test_recipes_build(self, name):
        config = Config(str(PROJECT_CONFIG.parent / "configs" / name))
        config.model_config()
        config.train_config()
        config.texture_spec()

    def test_dot_get(self, tmp_path):
        config = Config(str(write(tmp_path, "train:\n  lr_init: 0.5\n")))
        assert config.get("train.lr_init") == 0.5
        assert config.get("train.missing", 7) == 7
        assert config.get("train.lr_init.deeper") is None

    def test_sections(self, tmp_path):
        config = Config(str(write(tmp_path, "model:\n  base_width: 16\neval:\n")))
        assert config.get_section("model") == {"base_width": 16}
        assert config.get_section("eval") == {}
        assert config.get_section("absent") == {}

    def test_defaults_for_empty_file(self, tmp_path):
        config = Config(str(write(tmp_path, "")))
        assert config.n_train == 200
        assert config.image_size == 64
        assert config.ablation_seeds == [0, 1, 2]
        assert config.ablation_epochs is None
        assert config.verbose_logging

    def test_overrides(self, tmp_path):
        config = Config(str(write(tmp_path, "train:\n  epochs: 5\n  seed: 1\n")))
        changed = config.with_overrides({"train.epochs": 2, "train.seed": None,
                                         "model.branch_mask": "hw"})
        assert changed.get("train.epochs") == 2
        assert changed.get("train.seed") == 1
        assert changed.get("model.branch_mask") == "hw"
        assert config.get("train.epochs") == 5

    def test_override_through_scalar(self, tmp_path):
        config = Config(str(write(tmp_path, "train: 3\n")))
        with pytest.raises(ConfigError):
            config.with_overrides({"train.epochs": 2})

    def test_model_config_takes_data_shape(self, tmp_path):
        text = "data:\n  image_size: 32\n  n_classes: 3\nmodel:\n  base_width: 4\n"
        cfg = Config(str(write(tmp_path, text))).model_config()
        assert cfg.image_size == 32 and cfg.n_classes == 3 and cfg.base_width == 4

    def test_invalid_model_section(self, tmp_path):
        with pytest.raises(ConfigError):
            Config(str(write(tmp_path, "model:\n  base_width: 6\n"))).model_config()

    def test_invalid_train_section(self, tmp_path):
        with pytest.raises(ConfigError):
            Config(str(write(tmp_path, "train:\n  warmup: 3\n"))).train_config()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            Config(str(tmp_path / "absent.yaml"))

    @pytest.mark.parametrize("text", ["model: [1, 2\n", "- a\n- b\n"])
    def test_malformed(self, tmp_path, text):
        with pytest.raises(ConfigError):
            Config(str(write(tmp_path, text)))

    def test_section_must_be_mapping(self, tmp_path):
        with pytest.raises(ConfigError):
            Config(str(write(tmp_path, "model: 3\n"))).get_section("model")

    def test_get_config_is_cached(self, tmp_path):
        path = str(write(tmp_path, "data:\n  n_train: 3\n"))
        assert get_config(path) is get_config(path)
        assert get_config(path).n_train == 3

    def test_get_config_reloads_edited_file(self, tmp_path):
        path = write(tmp_path, "data:\n  n_train: 3\n")
        first = get_config(str(path))
        path.write_text("data:\n  n_train: 5\n")
        stat = path.stat()
        os.utime(path, ns=(stat.st_atime_ns, stat.st_mtime_ns + 1_000_000_000))
        assert get_config(str(path)).n_train == 5
        assert first.n_train == 3

    def test_get_config_defaults_to_project_file(self):
        assert get_config().config_path == default_config_path()

    def test_get_config_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            get_config(str(tmp_path / "absent.yaml"))
