"""Pipeline command-line interface."""

from .config import (ConfigError, RunConfig, apply_overrides, deep_merge,
                     load_config, resolve, resolved_dict, write_snapshot)
from .artifacts import (ArtifactError, Workspace, load_bundle, load_dataset,
                        load_stats, load_vae, save_bundle, save_dataset, save_vae)
from .main import (EXIT_CONFIG, EXIT_MISSING_ARTIFACT, EXIT_NUMERICAL,
                   EXIT_USAGE, build_parser, main)
from .commands import COMMANDS

__all__ = [
    "ConfigError",
    "RunConfig",
    "apply_overrides",
    "deep_merge",
    "load_config",
    "resolve",
    "resolved_dict",
    "write_snapshot",
    "ArtifactError",
    "Workspace",
    "load_bundle",
    "load_dataset",
    "load_stats",
    "load_vae",
    "save_bundle",
    "save_dataset",
    "save_vae",
    "EXIT_CONFIG",
    "EXIT_MISSING_ARTIFACT",
    "EXIT_NUMERICAL",
    "EXIT_USAGE",
    "build_parser",
    "main",
    "COMMANDS",
]
