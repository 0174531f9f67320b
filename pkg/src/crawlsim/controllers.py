"""Open-loop and rule-based controllers.

Both lock the differentials and stay in low gear.  The open-loop baseline
just drives forward at constant speed.  The rule-based controller watches
the ground-speed sensor: after t_stuck seconds without motion it ramps the
commanded speed up, and if that fails it backs up and retries on a
slightly different line by steering left then right.  All timing follows
the shared 20 Hz tick; the state machine is a pure function over an
explicit FsmState, so replaying a recorded observation stream reproduces
the controller's output exactly.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Optional

from .errors import ParameterError
from .render import DepthImage
from .vehicle import Action, GroundSpeed

LOCKED_LOW = {"d": (True, True), "s": True}

OL_SPEED = 0.5  # m/s, constant forward command of the open-loop controller


@dataclass(frozen=True)
class Observation:
    """Sensor snapshot fed to controllers; mirrors a dataset frame minus
    the action fields.  depth may be None for controllers that do not use
    the camera."""

    depth: Optional[DepthImage]
    w: tuple[float, float, float, float]
    g: GroundSpeed
    t: float


@dataclass(frozen=True)
class RbParams:
    """Tunable constants of the rule-based controller; this vector is what
    the parameter-adaptation pipeline optimizes per context."""

    v_nominal: float = 0.5
    v_boost: float = 0.75
    t_stuck: float = 2.0
    t_ramp_fail: float = 3.0
    t_backup: float = 2.0
    v_backup: float = 0.5
    steer_recover: float = 0.314
    t_steer: float = 2.0
    stuck_speed_eps: float = 0.02

    def __post_init__(self):
        for name in FIT_PARAM_NAMES:
            if getattr(self, name) <= 0:
                raise ParameterError(f"RbParams.{name} must be positive")
        if self.v_boost < self.v_nominal:
            raise ParameterError("v_boost must be >= v_nominal")


FIT_PARAM_NAMES = (
    "v_nominal",
    "v_boost",
    "t_stuck",
    "t_ramp_fail",
    "t_backup",
    "v_backup",
    "steer_recover",
    "t_steer",
    "stuck_speed_eps",
)


def save_rb_params(params: RbParams, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({k: getattr(params, k) for k in FIT_PARAM_NAMES}, f, indent=2)
        f.write("\n")


def load_rb_params(path) -> RbParams:
    with open(path, "r", encoding="utf-8") as f:
        return RbParams(**json.load(f))


class Mode(enum.Enum):
    FORWARD = "Forward"
    RAMP = "Ramp"
    BACKUP = "Backup"
    STEER_LEFT = "SteerLeft"
    STEER_RIGHT = "SteerRight"


@dataclass(frozen=True)
class FsmState:
    mode: Mode = Mode.FORWARD
    mode_entry_time: float = 0.0
    stuck_since: Optional[float] = None


def ol_act(t: float, obs: Observation | None = None) -> Action:
    """Open-loop baseline: constant forward speed, locks, low gear.

    Time- and perception-invariant by construction; the arguments exist
    only to satisfy the common controller signature.
    """
    return Action(v=OL_SPEED, omega=0.0, **LOCKED_LOW)


def rb_act(
    obs: Observation, fsm: FsmState, params: RbParams
) -> tuple[Action, FsmState]:
    """Rule-based recovery controller; returns (action, next FsmState).

    Forward holds v_nominal until the ground-speed sensor reads below
    stuck_speed_eps for t_stuck continuously, then Ramp raises the command
    linearly to v_boost over t_ramp_fail (aborting back to Forward if
    motion resumes).  If still stuck, Backup reverses for t_backup, then
    SteerLeft/SteerRight drive boosted with opposite steering for t_steer
    each before returning to Forward.  Backup and the steer states always
    run to completion.
    """
    if obs.t < fsm.mode_entry_time:
        raise ParameterError("observation time precedes FSM mode entry")
    t = obs.t
    moving = obs.g.planar >= params.stuck_speed_eps
    stuck_since = None if moving else (fsm.stuck_since if fsm.stuck_since is not None else t)
    mode = fsm.mode
    entry = fsm.mode_entry_time

    if mode is Mode.FORWARD:
        if stuck_since is not None and t - stuck_since >= params.t_stuck:
            mode, entry = Mode.RAMP, t
    elif mode is Mode.RAMP:
        if moving:
            mode, entry = Mode.FORWARD, t
        elif t - entry >= params.t_ramp_fail:
            mode, entry = Mode.BACKUP, t
    elif mode is Mode.BACKUP:
        if t - entry >= params.t_backup:
            mode, entry = Mode.STEER_LEFT, t
    elif mode is Mode.STEER_LEFT:
        if t - entry >= params.t_steer:
            mode, entry = Mode.STEER_RIGHT, t
    elif mode is Mode.STEER_RIGHT:
        if t - entry >= params.t_steer:
            mode, entry = Mode.FORWARD, t

    if mode is not fsm.mode:
        stuck_since = None if moving else t

    if mode is Mode.FORWARD:
        action = Action(v=params.v_nominal, omega=0.0, **LOCKED_LOW)
    elif mode is Mode.RAMP:
        frac = (t - entry) / params.t_ramp_fail
        v = params.v_nominal + (params.v_boost - params.v_nominal) * frac
        action = Action(v=v, omega=0.0, **LOCKED_LOW)
    elif mode is Mode.BACKUP:
        action = Action(v=-params.v_backup, omega=0.0, **LOCKED_LOW)
    elif mode is Mode.STEER_LEFT:
        action = Action(v=params.v_boost, omega=params.steer_recover, **LOCKED_LOW)
    else:
        action = Action(v=params.v_boost, omega=-params.steer_recover, **LOCKED_LOW)

    return action, FsmState(mode=mode, mode_entry_time=entry, stuck_since=stuck_since)


class OpenLoopController:
    """Harness-facing wrapper for ol_act."""

    id = "OL"
    needs_depth = False

    def reset(self) -> None:
        pass

    def act(self, obs: Observation) -> Action:
        return ol_act(obs.t, obs)


class RuleBasedController:
    """Harness-facing wrapper holding the FSM state between ticks."""

    id = "RB"
    needs_depth = False

    def __init__(self, params: RbParams | None = None):
        self.params = params or RbParams()
        self.fsm = FsmState()
        self._started = False

    def reset(self) -> None:
        self.fsm = FsmState()
        self._started = False

    def act(self, obs: Observation) -> Action:
        if not self._started:
            # anchor the FSM clock at the first observation
            self.fsm = FsmState(mode_entry_time=obs.t)
            self._started = True
        action, self.fsm = rb_act(obs, self.fsm, self.params)
        return action
