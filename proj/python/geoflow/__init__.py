"""Geometry-consistency rewards for generated video, a toy flow-policy GRPO
trainer and epipolar metrics. Thin wrappers over the C++ core."""

import json as _json

from ._geoflow import (
    GeoflowError,
    composite,
    dynamic_degree,
    eight_point,
    geo_quality,
    group_advantages,
    normalized_epe,
    relative_depth_error,
    reproject_depth,
    rigid_flow,
    sampson_error,
    sde_step,
    set_num_threads,
)
from . import _geoflow

__all__ = [
    "GeoflowError",
    "composite",
    "dynamic_degree",
    "eight_point",
    "geo_quality",
    "group_advantages",
    "normalized_epe",
    "relative_depth_error",
    "reproject_depth",
    "rigid_flow",
    "sampson_error",
    "score_dir",
    "sde_step",
    "set_num_threads",
    "synth",
    "train_toy",
]


def _dump(obj):
    return "" if obj is None else _json.dumps(obj)


def synth(out, spec=None, perturbation=None, seed=0):
    """Render a synthetic clip into the predictor-dump layout at `out`."""
    _geoflow.synth(str(out), _dump(spec), _dump(perturbation), seed)


def score_dir(path, config=None):
    """Score a predictor-dump directory; returns the report as a dict."""
    return _json.loads(_geoflow.score_dir(str(path), _dump(config)))


def train_toy(config=None, pretrain_iterations=2000, pretrain_seed=0):
    """GRPO on the toy latent generator; returns per-iteration metrics."""
    raw = _geoflow.train_toy(_dump(config or {}), pretrain_iterations, pretrain_seed)
    return _json.loads(raw)
