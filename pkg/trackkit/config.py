import logging

import yaml

from .models import (Config, PipelineConfig, DriftConfig, MetricsConfig,
                     HarnessConfig, SelectorConfig, Pathlike)


def load_config(config: Config, config_file: Pathlike, logger_name: str = "trackkit"):
    """Load a given :code:`config_file` from disk and update a :code:`config`
    object in place.

    Nested sections are updated key by key so that a file only needs to carry
    the values that differ from the defaults.

    Args:
        config: The config to update
        config_file: The config file to load. The config file is in YAML
        logger_name: Logger to report ignored keys to

    """
    logger = logging.getLogger(logger_name)
    with open(config_file) as f:
        _config = yaml.load(f, Loader=yaml.SafeLoader) or {}
    for k in _config:
        if k not in config:
            logger.warning(f"Ignoring unknown config key {k} in {config_file}")
    for k in config:
        if k in _config:
            v = _config[k]
            if isinstance(v, dict):
                for key, val in v.items():
                    config[k][key] = val
            else:
                config[k] = v


def default_config() -> Config:
    """Generate a default config in case config file is not on disk.

    """
    return Config(pipeline=PipelineConfig(collective=["family", "people", "crowd", "group",
                                                      "team", "couple", "herd", "flock",
                                                      "audience", "pair", "band", "army"]),
                  drift=DriftConfig(),
                  metrics=MetricsConfig(),
                  harness=HarnessConfig(),
                  tselector=SelectorConfig())
