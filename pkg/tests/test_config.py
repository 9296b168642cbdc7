from pathlib import Path
import pytest

from trackkit.config import default_config, load_config
from trackkit.models import HarnessConfig


def test_config_init():
    config = default_config()
    for k in config:
        assert k in config
    assert "family" in config.pipeline.collective
    assert config.harness.clip_len == 8
    config.harness.retries = 5
    config["harness"]["retries"] = 6
    assert config.harness.retries == 6
    with pytest.raises(KeyError):
        config["harness"]["no_such_option"] = 1
    config.harness = {"clip_len": 4}
    assert isinstance(config.harness, HarnessConfig)
    assert config.harness.clip_len == 4 and config.harness.max_unsplit == 32


def test_config_load():
    config = default_config()
    load_config(config, Path(__file__).parent.joinpath("config.yaml"))
    assert config.seed == 7
    assert config.pipeline.tau_g == 0.5
    assert config.pipeline.tau_t == 0.8
    assert config.pipeline.collective == ["family", "crowd"]
    assert config.drift.gate_quantile == 0.999
    assert config.metrics.frame_size == [1280, 720]
    assert config.harness.clip_len == 6 and config.harness.retries == 1


def test_config_load_diff_config(caplog):
    config = default_config()
    load_config(config, Path(__file__).parent.joinpath("config.yaml"))
    load_config(config, Path(__file__).parent.joinpath("diff_config.yaml"))
    assert config.seed == 3
    assert config.harness.clip_len == 6
    assert config.harness.max_unsplit == 16
    assert config.tselector.weighting == "none"
    assert "unknown_section" not in config
    assert "Ignoring unknown config key unknown_section" in caplog.text


def test_config_load_empty_file(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    config = default_config()
    load_config(config, path)
    assert config == default_config()
