"""Quasi-static vehicle model.

The chassis is fit to the terrain as a least-squares plane over per-wheel
support heights, lifted so it never penetrates; traction derives from an
axle-level drive rule (differential locks let a one-wheel-contact axle
keep driving) scaled by a gear-dependent climb limit.  Stepping is a pure
function at a fixed 20 Hz tick: crawling speeds are low enough that
momentum is negligible, which keeps every transition deterministic.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BoundaryError, ParameterError, QueryError
from .terrain import HeightMap, height_at, heights_at

TICK_DT = 0.05  # fixed simulation tick, seconds (20 Hz)
V_MAX = 1.0  # |commanded linear velocity| bound, m/s
OMEGA_MAX = 0.35  # |steering angle| bound, radians

CONTACT_TOL = 0.005  # wheel counts as contacting within 5 mm of the plane
TIP_THRESHOLD = 0.785  # |roll| or |pitch| beyond this tips the vehicle
CLIMB_LIMIT_LOW = 0.61  # max uphill pitch in low gear, radians
CLIMB_LIMIT_HIGH = 0.35  # max uphill pitch in high gear, radians
STUCK_WINDOW = 10.0  # seconds of low ground speed before a trial is stuck
STUCK_SPEED = 0.02  # m/s planar ground speed threshold
GOAL_MARGIN = 0.2  # goal line distance from the course end, meters

FOOTPRINT_SAMPLE_FRACTION = 0.5  # sample radius as fraction of wheel radius


@dataclass(frozen=True)
class VehicleGeometry:
    """Chassis geometry. Body frame: origin at the front axle center on the
    contact plane, x forward, y left, z up; axle offsets are measured back
    from the front axle and must be strictly decreasing."""

    name: str
    axle_x_offsets: tuple[float, ...]
    track_width: float = 0.20
    body_length: float = 0.863
    body_width: float = 0.249
    body_height: float = 0.200
    wheel_radius: float = 0.06
    camera_mount: tuple[float, float, float] = (0.0, 0.0, 0.30)
    camera_max_tilt: float = 1.05

    def __post_init__(self):
        offs = tuple(float(v) for v in self.axle_x_offsets)
        object.__setattr__(self, "axle_x_offsets", offs)
        if any(b >= a for a, b in zip(offs, offs[1:])):
            raise ParameterError("axle offsets must be strictly decreasing")
        for dim in (
            self.track_width,
            self.body_length,
            self.body_width,
            self.body_height,
            self.wheel_radius,
        ):
            if dim <= 0:
                raise ParameterError("vehicle dimensions must be positive")

    @property
    def n_axles(self) -> int:
        return len(self.axle_x_offsets)

    @property
    def n_wheels(self) -> int:
        return 2 * self.n_axles

    @property
    def wheelbase(self) -> float:
        return abs(self.axle_x_offsets[-1])

    def wheel_offsets(self) -> list[tuple[float, float]]:
        """Body-frame (x, y) of each wheel, axle-major, left before right."""
        half = self.track_width / 2.0
        out = []
        for ax in self.axle_x_offsets:
            out.append((ax, half))
            out.append((ax, -half))
        return out


V6W = VehicleGeometry(name="V6W", axle_x_offsets=(0.0, -0.471, -0.603), body_length=0.863)
V4W = VehicleGeometry(name="V4W", axle_x_offsets=(0.0, -0.312), body_length=0.523)
PRESETS = {"V6W": V6W, "V4W": V4W}


def load_geometry(path) -> VehicleGeometry:
    """Load a geometry preset from a JSON config (keys = field names)."""
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    raw["axle_x_offsets"] = tuple(raw["axle_x_offsets"])
    raw["camera_mount"] = tuple(raw["camera_mount"])
    return VehicleGeometry(**raw)


def save_geometry(geom: VehicleGeometry, path) -> None:
    data = {
        "name": geom.name,
        "axle_x_offsets": list(geom.axle_x_offsets),
        "track_width": geom.track_width,
        "body_length": geom.body_length,
        "body_width": geom.body_width,
        "body_height": geom.body_height,
        "wheel_radius": geom.wheel_radius,
        "camera_mount": list(geom.camera_mount),
        "camera_max_tilt": geom.camera_max_tilt,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


@dataclass(frozen=True)
class Action:
    """One control command: linear velocity, steering angle, differential
    locks (front, rear) and gear (True = low). v and omega are clamped to
    the actuator bounds on construction."""

    v: float
    omega: float
    d: tuple[bool, bool] = (True, True)
    s: bool = True

    def __post_init__(self):
        object.__setattr__(self, "v", min(max(float(self.v), -V_MAX), V_MAX))
        object.__setattr__(
            self, "omega", min(max(float(self.omega), -OMEGA_MAX), OMEGA_MAX)
        )
        object.__setattr__(self, "d", (bool(self.d[0]), bool(self.d[1])))
        object.__setattr__(self, "s", bool(self.s))


class Status(enum.Enum):
    RUNNING = "Running"
    STUCK = "Stuck"
    TIPPED = "Tipped"
    SUCCEEDED = "Succeeded"


@dataclass(frozen=True)
class GroundSpeed:
    """Downward-facing ground sensor: body-frame planar velocity, height
    over terrain, and two reliability flags (always good in simulation)."""

    dx: float = 0.0
    dy: float = 0.0
    z_clearance: float = 0.0
    flag_speed: bool = True
    flag_z: bool = True

    @property
    def planar(self) -> float:
        return math.hypot(self.dx, self.dy)


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    z: float
    roll: float
    pitch: float
    yaw: float
    wheel_contact: tuple[bool, ...]
    wheel_rim_speed: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    ground_speed: GroundSpeed = GroundSpeed()
    camera_tilt: float = 0.0
    t: float = 0.0
    status: Status = Status.RUNNING

    def __post_init__(self):
        if len(self.wheel_rim_speed) != 4:
            raise ParameterError("wheel_rim_speed must have exactly 4 entries")
        if abs(self.roll) > math.pi / 2 or abs(self.pitch) > math.pi / 2:
            raise ParameterError("roll/pitch out of range")


def fit_chassis(
    m: HeightMap, x: float, y: float, yaw: float, geom: VehicleGeometry
) -> tuple[float, float, float, tuple[bool, ...]]:
    """Fit the chassis plane to the terrain at planar pose (x, y, yaw).

    Per-wheel support height is the max terrain height over a 5-point
    sample of the wheel footprint (center plus 4 axis-aligned points at
    half the wheel radius).  A least-squares plane through the supports is
    lifted by the minimal amount that clears every support, so the chassis
    never penetrates terrain; wheels within CONTACT_TOL of the lifted
    plane are in contact.  Returns (z, roll, pitch, contacts) with z the
    plane height at the body origin.
    """
    offsets = geom.wheel_offsets()
    cy, sy = math.cos(yaw), math.sin(yaw)
    wx = np.array([x + cy * ox - sy * oy for ox, oy in offsets])
    wy = np.array([y + sy * ox + cy * oy for ox, oy in offsets])
    r = FOOTPRINT_SAMPLE_FRACTION * geom.wheel_radius
    sx = np.concatenate([wx, wx + r, wx - r, wx, wx])
    sy_ = np.concatenate([wy, wy, wy, wy + r, wy - r])
    try:
        sampled = heights_at(m, sx, sy_)
    except QueryError as e:
        raise BoundaryError(f"wheel footprint outside map at ({x:.3f}, {y:.3f})") from e
    support = sampled.reshape(5, len(offsets)).max(axis=0)

    mx, my = wx.mean(), wy.mean()
    a_mat = np.column_stack([wx - mx, wy - my, np.ones_like(wx)])
    coef, *_ = np.linalg.lstsq(a_mat, support, rcond=None)
    a, b, c = coef
    plane = a * (wx - mx) + b * (wy - my) + c
    c += float(np.max(support - plane))
    plane = a * (wx - mx) + b * (wy - my) + c
    contacts = tuple(bool(v) for v in (plane - support) <= CONTACT_TOL)

    pitch = math.atan(a * cy + b * sy)
    roll = math.atan(-a * sy + b * cy)
    z = float(a * (x - mx) + b * (y - my) + c)
    return z, roll, pitch, contacts


def traction(
    contacts: Sequence[bool], d: tuple[bool, bool], s: bool, pitch: float
) -> float:
    """Traction factor in [0, 1].

    An axle drives iff both wheels contact, or its governing lock is
    engaged and at least one wheel contacts.  The front lock governs the
    front axle; the rear lock governs every other axle (the rear lock is
    shared by middle and rear axles on the three-axle chassis).  The
    fraction of driving axles is then derated linearly by uphill pitch up
    to the gear's climb limit (low gear climbs steeper than high gear).
    """
    if len(contacts) % 2 != 0:
        raise ParameterError("contacts must pair into axles")
    n_axles = len(contacts) // 2
    driving = 0
    for axle in range(n_axles):
        left, right = contacts[2 * axle], contacts[2 * axle + 1]
        lock = d[0] if axle == 0 else d[1]
        if (left and right) or (lock and (left or right)):
            driving += 1
    base = driving / n_axles
    theta_max = CLIMB_LIMIT_LOW if s else CLIMB_LIMIT_HIGH
    if pitch > theta_max:
        return 0.0
    return base * (1.0 - max(0.0, pitch) / theta_max)


def step(
    state: VehicleState,
    action: Action,
    m: HeightMap,
    geom: VehicleGeometry,
    dt: float = TICK_DT,
) -> VehicleState:
    """Advance one tick: Ackermann kinematics scaled by traction, then
    re-fit the chassis at the new planar pose.

    Rim speed is the commanded speed on all four sensed wheels, so wheel
    slip (rim minus measured ground speed) is directly observable whenever
    traction is lost.
    """
    if state.status is not Status.RUNNING:
        raise ParameterError("step requires a running vehicle")
    t_factor = traction(state.wheel_contact, action.d, action.s, state.pitch)
    v_eff = action.v * t_factor
    yaw2 = state.yaw + (v_eff / geom.wheelbase) * math.tan(action.omega) * dt
    cp = math.cos(state.pitch)
    x2 = state.x + v_eff * math.cos(yaw2) * cp * dt
    y2 = state.y + v_eff * math.sin(yaw2) * cp * dt

    z2, roll2, pitch2, contacts2 = fit_chassis(m, x2, y2, yaw2, geom)

    gdx = (x2 - state.x) / dt
    gdy = (y2 - state.y) / dt
    cyaw, syaw = math.cos(yaw2), math.sin(yaw2)
    body_dx = cyaw * gdx + syaw * gdy
    body_dy = -syaw * gdx + cyaw * gdy
    clearance = z2 - height_at(m, x2, y2)

    tipped = abs(roll2) > TIP_THRESHOLD or abs(pitch2) > TIP_THRESHOLD
    return VehicleState(
        x=x2,
        y=y2,
        z=z2,
        roll=roll2,
        pitch=pitch2,
        yaw=yaw2,
        wheel_contact=contacts2,
        wheel_rim_speed=(action.v,) * 4,
        ground_speed=GroundSpeed(body_dx, body_dy, clearance, True, True),
        camera_tilt=state.camera_tilt,
        t=state.t + dt,
        status=Status.TIPPED if tipped else Status.RUNNING,
    )


def initial_state(
    m: HeightMap, x: float, y: float, yaw: float, geom: VehicleGeometry
) -> VehicleState:
    z, roll, pitch, contacts = fit_chassis(m, x, y, yaw, geom)
    return VehicleState(x=x, y=y, z=z, roll=roll, pitch=pitch, yaw=yaw, wheel_contact=contacts)


class CameraTiltController:
    """PD regulator holding the camera's world pitch at a target.

    Output is a tilt rate, slew-limited to SLEW_LIMIT; the tilt itself is
    clamped to the mount range.
    """

    KP = 4.0
    KI = 0.0
    KD = 0.2
    SLEW_LIMIT = 1.0  # rad/s
    TILT_CLAMP = 1.05  # rad

    def __init__(self):
        self._prev_error: float | None = None

    def update(self, state: VehicleState, target_world_pitch: float, dt: float) -> float:
        """One PID step; returns the new camera tilt."""
        error = target_world_pitch - (state.pitch + state.camera_tilt)
        de = 0.0 if self._prev_error is None else (error - self._prev_error) / dt
        self._prev_error = error
        rate = self.KP * error + self.KD * de
        rate = min(max(rate, -self.SLEW_LIMIT), self.SLEW_LIMIT)
        tilt = state.camera_tilt + rate * dt
        return min(max(tilt, -self.TILT_CLAMP), self.TILT_CLAMP)


def trial_status(
    history: Sequence[VehicleState],
    course_length: float,
    direction: int = 1,
    stuck_window: float = STUCK_WINDOW,
    stuck_speed: float = STUCK_SPEED,
) -> Status:
    """Classify a trial from recent states (newest last).

    Succeeded once the body origin crosses the goal line GOAL_MARGIN
    inside the far end; Tipped per the step flag; Stuck when mean planar
    ground speed stays below stuck_speed over a full trailing
    stuck_window.  The caller treats all three as absorbing.
    """
    if not history:
        raise ParameterError("trial_status needs at least one state")
    cur = history[-1]
    # 1e-9 absorbs accumulated float error in x (nanometers, not meters)
    if direction >= 0:
        if cur.x >= course_length - GOAL_MARGIN - 1e-9:
            return Status.SUCCEEDED
    else:
        if cur.x <= GOAL_MARGIN + 1e-9:
            return Status.SUCCEEDED
    if cur.status is Status.TIPPED:
        return Status.TIPPED
    if cur.t - history[0].t >= stuck_window - 1e-9:
        cutoff = cur.t - stuck_window - 1e-9
        speeds = [st.ground_speed.planar for st in history if st.t >= cutoff]
        if speeds and float(np.mean(speeds)) < stuck_speed:
            return Status.STUCK
    return Status.RUNNING
