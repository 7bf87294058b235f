"""Python bindings for the mscmhmst traffic-flow forecaster."""

from ._core import (
    CheckpointError,
    ConfigError,
    IoError,
    Model,
    ParseError,
    PreparedData,
    WindowedDataset,
    __version__,
    config_keys,
    conv1d_same,
    default_config,
    gradcheck,
    load_checkpoint,
    load_series,
    make_windows,
    metrics,
    naive_report,
    normalize_stats,
    prepare,
    run_cli,
    synthesize,
    trimmed_mean_protocol,
    write_series,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "IoError",
    "Model",
    "ParseError",
    "PreparedData",
    "WindowedDataset",
    "__version__",
    "config_keys",
    "conv1d_same",
    "default_config",
    "gradcheck",
    "load_checkpoint",
    "load_series",
    "make_windows",
    "metrics",
    "naive_report",
    "normalize_stats",
    "prepare",
    "run_cli",
    "synthesize",
    "trimmed_mean_protocol",
    "write_series",
]
