"""YAML config parsing: schema enforcement and the seed override."""
import pytest

from seqmasks.config import SEED_ENV_VAR, load_train_config
from seqmasks.errors import ConfigError

GOOD = """
spec_version: 1
seed: 11
data:
  root: /data/corpus
  dataset: mars
model:
  backbone: small
  bottleneck_norm: layer
loss:
  lambda2: 0.5
  margin_hard: 0.2
train:
  p: 3
  kseq: 2
  epochs: 2
  steps_per_epoch: 5
  checkpoint_dir: /tmp/run
"""


class TestLoadTrainConfig:
    def test_parses_all_sections(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(GOOD)
        cfg = load_train_config(path)
        assert cfg.seed == 11
        assert cfg.data_root == "/data/corpus"
        assert cfg.bottleneck_norm == "layer"
        assert cfg.weights.lambda2 == 0.5
        assert cfg.weights.margin_hard == 0.2
        assert cfg.weights.lambda1 == 1.0  # untouched default
        assert cfg.p == 3 and cfg.epochs == 2

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ConfigError, match="nope.yaml"):
            load_train_config(tmp_path / "nope.yaml")

    def test_unknown_top_level_key(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("experiment: x\ntrain:\n  p: 2\n")
        with pytest.raises(ConfigError, match="experiment"):
            load_train_config(path)

    def test_unknown_section_key(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("train:\n  p: 2\n  kseq: 2\n  optimizer: sgd\n")
        with pytest.raises(ConfigError, match="optimizer"):
            load_train_config(path)

    def test_bad_spec_version(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("spec_version: 99\n")
        with pytest.raises(ConfigError, match="spec_version"):
            load_train_config(path)

    def test_invalid_values_rejected(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("train:\n  p: 1\n")
        with pytest.raises(ConfigError, match="p must be"):
            load_train_config(path)

    def test_env_seed_override(self, tmp_path, monkeypatch):
        path = tmp_path / "c.yaml"
        path.write_text(GOOD)
        monkeypatch.setenv(SEED_ENV_VAR, "777")
        assert load_train_config(path).seed == 777
        monkeypatch.setenv(SEED_ENV_VAR, "not-a-number")
        with pytest.raises(ConfigError, match=SEED_ENV_VAR):
            load_train_config(path)

    def test_empty_config_is_defaults(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("")
        cfg = load_train_config(path)
        assert cfg.p == 8 and cfg.regime == "end2end"
