# SPDX-License-Identifier: Apache-2.0
"""Relative-pose estimation, formation control and TDMA broadcast simulation.

Run configurations are plain dicts using the same keys as the CLI config
files; unknown keys raise ConfigError.
"""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    Pose,
    PoseEstimate,
    UnitQuat,
    Vec3,
    chord_gnll,
    compose,
    crc32,
    decode_frame,
    dice_iou,
    encode_frame,
    gnll,
    lower_median,
    pos_dist,
    pose_loss,
    quat_dist,
    relative_pose,
    rot_geodesic_deg,
    transform_grid,
    wrap_angle,
    youden_threshold,
)

__all__ = [
    "ConfigError",
    "Pose",
    "PoseEstimate",
    "UnitQuat",
    "Vec3",
    "chord_gnll",
    "compose",
    "crc32",
    "decode_frame",
    "default_config",
    "dice_iou",
    "encode_frame",
    "gnll",
    "lower_median",
    "pos_dist",
    "pose_loss",
    "quat_dist",
    "relative_pose",
    "rot_geodesic_deg",
    "run_formation",
    "run_homing",
    "run_netbench",
    "transform_grid",
    "wrap_angle",
    "youden_threshold",
]


def default_config():
    """Every config key with its default value."""
    return _json.loads(_core.default_config())


def _dump(config):
    return _json.dumps(config or {})


def run_formation(config=None):
    """Follower summaries of a leader-follower run."""
    return _core.run_formation(_dump(config))


def run_homing(config=None):
    """Record a trajectory, then replay it from keyframes."""
    return _core.run_homing(_dump(config))


def run_netbench(config=None):
    """Per-node statistics of a shared-slot broadcast simulation."""
    return _core.run_netbench(_dump(config))
