# tests/test_config.py

import logging

import pytest

from config import reload_config
from config.manager import ConfigManager
from utils.errors import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, ConfigError, DataError, NumericalError, exit_code_for
from utils.logging_config import setup_logging
from utils.progress import ProgressTracker, worker_count


class TestLayering:
    def test_defaults_validate(self):
        cfg = ConfigManager(profile_name="desk")
        cfg.validate()
        assert cfg.profile == "desk"
        assert cfg.get_int("encoder.layers") == 12
        assert cfg.get_int("tokenizer.K") == 64

    def test_profile_merges_over_defaults(self):
        cfg = ConfigManager(profile_name="full")
        assert cfg.get_int("encoder.width") == 768
        assert cfg.get_int("encoder.layers") == 12
        assert cfg.get_int("tokenizer.K") == 1024
        assert cfg.get_float("training.captioner.lr") == pytest.approx(2e-5)
        assert cfg.get_int("training.captioner.lm_epochs") == 20

    def test_profile_from_environment(self, monkeypatch):
        monkeypatch.setenv("TOKTIDE_PROFILE", "full")
        assert ConfigManager().profile == "full"

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            ConfigManager(profile_name="cluster")

    def test_experiment_file_wins(self, tiny_config):
        assert tiny_config.get_int("corpus.S") == 3
        assert tiny_config.get_list("run.systems") == ["fbank", "kmeans"]
        assert tiny_config.get_int("corpus.class_offset") == 0

    def test_yaml_experiment_file(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("seed: 42\ntokenizer:\n  K: 16\n")
        cfg = ConfigManager(profile_name="desk", experiment_path=path)
        assert cfg.get_int("seed") == 42
        assert cfg.get_int("tokenizer.K") == 16
        assert cfg.get("tokenizer.kind") == "kmeans"

    def test_missing_experiment_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ConfigManager(profile_name="desk", experiment_path=tmp_path / "absent.json")

    def test_experiment_file_must_be_a_mapping(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            ConfigManager(profile_name="desk", experiment_path=path)

    def test_paths_are_interpolated(self):
        assert ConfigManager(profile_name="desk").get("paths.corpus") == "data/corpus"

    def test_reload_keeps_the_global_instance(self, tiny_config_file):
        from config import config
        cfg = reload_config(profile="desk", experiment_path=tiny_config_file)
        assert cfg is config
        assert config.get_int("corpus.n_train") == 16


class TestValidation:
    @pytest.mark.parametrize("key,value", [
        ("seed", "abc"),
        ("seed", None),
        ("corpus.S", 1),
        ("corpus.max_events_per_clip", 5),
        ("tokenizer.kind", "wavelet"),
        ("captioner.kind", "lstm"),
        ("tokenizer.K", 0),
        ("tokenizer.n_layers", 3),
        ("tokenizer.layer", 0),
        ("tokenizer.layer", 5),
        ("tokenizer.split", 4),
        ("captioner.beam", 0),
    ])
    def test_rejected(self, tiny_config, key, value):
        tiny_config.override(key, value)
        with pytest.raises(ConfigError):
            tiny_config.validate()

    def test_error_names_every_problem(self, tiny_config):
        tiny_config.override("corpus.S", 1)
        tiny_config.override("tokenizer.kind", "wavelet")
        with pytest.raises(ConfigError, match="corpus.S.*tokenizer.kind|tokenizer.kind.*corpus.S"):
            tiny_config.validate()

    def test_override_creates_sections(self, tiny_config):
        tiny_config.override("out_of_domain.seed_offset", 7)
        assert tiny_config.get_int("out_of_domain.seed_offset") == 7


class TestConfigHash:
    def test_stable_across_loads(self, tiny_config_file):
        first = ConfigManager(profile_name="desk", experiment_path=tiny_config_file)
        second = ConfigManager(profile_name="desk", experiment_path=tiny_config_file)
        assert first.config_hash() == second.config_hash()
        assert len(first.config_hash()) == 64

    def test_experiment_values_change_it(self, tiny_config):
        before = tiny_config.config_hash()
        tiny_config.override("seed", 4)
        assert tiny_config.config_hash() != before

    def test_logging_does_not_change_it(self, tiny_config):
        before = tiny_config.config_hash()
        tiny_config.override("logging.level", "DEBUG")
        assert tiny_config.config_hash() == before


class TestAccessors:
    def test_scalar_as_list(self, tiny_config):
        assert tiny_config.get_list("seed") == [3]

    def test_missing_with_default(self, tiny_config):
        assert tiny_config.get("run.nothing", "x") == "x"
        assert tiny_config.get_dict("run.nothing") == {}


def test_exit_codes():
    assert exit_code_for(ConfigError("x")) == EXIT_CONFIG == 2
    assert exit_code_for(DataError("x")) == EXIT_DATA == 3
    assert exit_code_for(NumericalError("x")) == EXIT_NUMERICAL == 4
    assert exit_code_for(RuntimeError("x")) == 1
    assert isinstance(ConfigError("x"), ValueError)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("TOKTIDE_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("TOKTIDE_THREADS", "many")
    assert worker_count(default=2) == 2


def test_progress_tracker_counts():
    tracker = ProgressTracker(3, label="cells")
    tracker.update()
    tracker.update("failed")
    tracker.update()
    summary = tracker.get_summary()
    assert (summary["done"], summary["failed"], summary["total"]) == (2, 1, 3)


def test_setup_logging_levels():
    setup_logging("debug")
    assert logging.getLogger().level == logging.DEBUG
    assert logging.getLogger("matplotlib").level == logging.WARNING
    setup_logging("loud")
    assert logging.getLogger().level == logging.INFO
