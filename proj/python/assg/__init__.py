"""Python access to the assg localization pipeline."""

import json

from . import _assg
from ._assg import (
    ConfigError,
    FormatError,
    GenerationError,
    TrainingError,
    average_precision,
    detect,
    fuse_heatmaps,
    grow_step,
    heatmap,
    nms,
    run,
    temporal_iou,
)


def load_config(path):
    """Resolved run config as a dict."""
    return json.loads(_assg.config_json(str(path)))


def evaluate(config):
    """Score the detections of a run; returns the report dict."""
    return json.loads(run("eval", str(config)))


__all__ = [
    "ConfigError",
    "FormatError",
    "GenerationError",
    "TrainingError",
    "average_precision",
    "detect",
    "evaluate",
    "fuse_heatmaps",
    "grow_step",
    "heatmap",
    "load_config",
    "nms",
    "run",
    "temporal_iou",
]
