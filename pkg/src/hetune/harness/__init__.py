"""Configuration, experiment drivers and the ``hetune`` command line."""
from .config import PRESETS, ConfigError, ExperimentConfig, from_dict, load, preset
from .experiments import (REFERENCE_GAINS, cmd_bench_paper, cmd_keygen, cmd_n_sweep, cmd_replay,
                          cmd_timing, cmd_tune)

__all__ = ["REFERENCE_GAINS", "PRESETS", "ConfigError", "ExperimentConfig", "cmd_bench_paper",
           "cmd_keygen", "cmd_n_sweep", "cmd_replay", "cmd_timing", "cmd_tune", "from_dict",
           "load", "preset"]
