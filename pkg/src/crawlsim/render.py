"""Actuated depth camera: pinhole model over the terrain heightfield.

The camera is mounted on the chassis and tilts about the body pitch axis
so it can keep pointing at the terrain as the vehicle pitches.  Depth is
the Euclidean distance along each pixel ray to the first terrain crossing,
capped at MAX_RANGE; rays that leave the map read terrain height 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ParameterError
from .terrain import HeightMap

FOV_H = 1.571  # horizontal field of view, radians
MAX_RANGE = 5.0  # meters; also the no-hit sentinel
FINE_STEP_FACTOR = 0.05  # march sample spacing as a fraction of map resolution


@dataclass
class DepthImage:
    width: int
    height: int
    fov: float
    data: np.ndarray  # (height, width) float64 meters, values in (0, MAX_RANGE]
    max_range: float = MAX_RANGE


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def body_rotation(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Body-to-world rotation. Positive pitch = nose up, positive roll =
    left side up, with body axes x forward / y left / z up."""
    return rot_z(yaw) @ rot_y(-pitch) @ rot_x(roll)


def camera_rotation(roll: float, pitch: float, yaw: float, tilt: float) -> np.ndarray:
    """Camera-to-world rotation; camera axes x right / y down / z forward.

    tilt rotates the optical axis about the body pitch axis; positive tilt
    raises it, so the camera's world pitch is chassis pitch + tilt (exact
    at zero roll).
    """
    rb = body_rotation(roll, pitch, yaw)
    ct, st = math.cos(tilt), math.sin(tilt)
    forward_b = np.array([ct, 0.0, st])
    right_b = np.array([0.0, -1.0, 0.0])
    down_b = np.array([st, 0.0, -ct])
    return np.column_stack([rb @ right_b, rb @ down_b, rb @ forward_b])


def camera_pose(state, geom) -> tuple[np.ndarray, np.ndarray]:
    """World-frame camera position and camera-to-world rotation."""
    rb = body_rotation(state.roll, state.pitch, state.yaw)
    pos = np.array([state.x, state.y, state.z]) + rb @ np.asarray(geom.camera_mount)
    rot = camera_rotation(state.roll, state.pitch, state.yaw, state.camera_tilt)
    return pos, rot


def render_depth(
    m: HeightMap, state, geom, width: int, height: int
) -> DepthImage:
    """Ray-march a depth image from the vehicle's camera pose."""
    if width < 8 or height < 8:
        raise ParameterError("depth image must be at least 8x8")
    pos, rot = camera_pose(state, geom)
    f_px = (width / 2.0) / math.tan(FOV_H / 2.0)
    fine_step = FINE_STEP_FACTOR * m.resolution
    data = _kernels.render_depth_raw(
        m.heights,
        m.gradient_bound,
        m.resolution,
        m.origin[0],
        m.origin[1],
        pos,
        rot,
        width,
        height,
        f_px,
        MAX_RANGE,
        fine_step,
    )
    return DepthImage(width, height, FOV_H, data)
