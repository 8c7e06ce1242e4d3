"""Liver lesion CAD pipeline on synthetic multi-sequence phantoms."""

from ._core import (
    ConfigError,
    MetricError,
    __version__,
    cohort_summary,
    default_config,
    fuse_slice,
    keep_count,
    lroc,
    normalize_config,
    retention_threshold,
    run_cli,
)

__all__ = [
    "ConfigError",
    "MetricError",
    "__version__",
    "cohort_summary",
    "default_config",
    "fuse_slice",
    "keep_count",
    "lroc",
    "normalize_config",
    "retention_threshold",
    "run_cli",
]
