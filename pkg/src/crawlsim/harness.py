"""Trial runner and benchmark grid.

A trial drops the vehicle on a flat staging apron just before the course,
runs the observe -> act -> step loop at the fixed tick until an absorbing
status or timeout, and reports the outcome.  The benchmark reproduces the
full evaluation grid: three difficulties x {open-loop, rule-based, policy
trained on own data, policy trained on the other vehicle's data} x ten
trials, half from each end of the course, everything derived from one
base seed so reports are byte-reproducible.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bclearn import BcController, BcParams, TrainConfig, preprocess, train
from .controllers import Observation, OpenLoopController, RuleBasedController
from .errors import BoundaryError, ParameterError
from .render import render_depth
from .rng import derive_seed
from .terrain import CourseSpec, Difficulty, HeightMap, generate_course
from .vehicle import (
    PRESETS,
    TICK_DT,
    CameraTiltController,
    Status,
    VehicleGeometry,
    initial_state,
    step,
    trial_status,
)

TRIAL_TIMEOUT = 60.0
DEPTH_SIZE = 64
ARENA_PAD = 1.0  # flat apron added before/after the course, meters
START_OFFSET = 0.2  # start this far before the course start line
CAMERA_TARGET_PITCH = -0.55  # world pitch the tilt servo holds, radians


class TrialOutcome(enum.Enum):
    SUCCEEDED = "Succeeded"
    STUCK = "Stuck"
    TIPPED = "Tipped"
    TIMEOUT = "Timeout"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class TrialResult:
    outcome: TrialOutcome
    traversal_time: float | None
    seed: int
    controller_id: str
    difficulty: str
    vehicle: str
    direction: int

    def __post_init__(self):
        if self.outcome is TrialOutcome.SUCCEEDED and self.traversal_time is None:
            raise ParameterError("successful trials must report a traversal time")


def build_arena(spec: CourseSpec) -> tuple[HeightMap, float]:
    """Course heightmap extended with flat aprons along x so a full vehicle
    fits behind the start line; returns (arena map, course length)."""
    course = generate_course(spec)
    res = course.resolution
    pad = int(round(ARENA_PAD / res))
    ny, nx = course.heights.shape
    heights = np.zeros((ny, nx + 2 * pad), dtype=np.float64)
    heights[:, pad : pad + nx] = course.heights
    arena = HeightMap(
        length_cells=nx + 2 * pad,
        width_cells=ny,
        resolution=res,
        origin=(-pad * res, 0.0),
        heights=heights,
    )
    course_length = (nx - 1) * res
    return arena, course_length


def default_start_pose(
    course_length: float, course_width: float, direction: int
) -> tuple[float, float, float]:
    """Body origin START_OFFSET before the course on the staging apron,
    centered laterally, heading along the course."""
    y = course_width / 2.0
    if direction >= 0:
        return (-START_OFFSET, y, 0.0)
    return (course_length + START_OFFSET, y, math.pi)


@dataclass
class SensorNoise:
    """Optional seeded Gaussian sensor noise (off by default everywhere).

    Perturbs only what the controllers observe, never the simulation
    state, so trials stay deterministic under a fixed seed.
    """

    seed: int
    rim_std: float = 0.01
    speed_std: float = 0.005
    clearance_std: float = 0.002

    def __post_init__(self):
        from .rng import SplitMix64

        self._gen = SplitMix64(derive_seed(self.seed, 0x5E15))

    def apply(self, obs: Observation) -> Observation:
        g = obs.g
        from .vehicle import GroundSpeed

        return Observation(
            depth=obs.depth,
            w=tuple(v + self.rim_std * self._gen.gauss() for v in obs.w),
            g=GroundSpeed(
                g.dx + self.speed_std * self._gen.gauss(),
                g.dy + self.speed_std * self._gen.gauss(),
                g.z_clearance + self.clearance_std * self._gen.gauss(),
                g.flag_speed,
                g.flag_z,
            ),
            t=obs.t,
        )


def observe(
    m: HeightMap,
    state,
    geom: VehicleGeometry,
    depth_size: int,
    with_depth: bool,
    noise: SensorNoise | None = None,
) -> Observation:
    depth = render_depth(m, state, geom, depth_size, depth_size) if with_depth else None
    obs = Observation(depth=depth, w=state.wheel_rim_speed, g=state.ground_speed, t=state.t)
    return noise.apply(obs) if noise is not None else obs


def run_trial(
    controller,
    geom: VehicleGeometry,
    course_spec: CourseSpec,
    start_pose: tuple[float, float, float] | None = None,
    timeout: float = TRIAL_TIMEOUT,
    direction: int = 1,
    depth_size: int = DEPTH_SIZE,
    frame_hook=None,
    sensor_noise: SensorNoise | None = None,
) -> TrialResult:
    """Run one deterministic trial; frame_hook(obs, action) sees every tick
    (and forces depth rendering, e.g. for recording)."""
    arena, course_length = build_arena(course_spec)
    if start_pose is None:
        start_pose = default_start_pose(course_length, course_spec.dims[1], direction)
    need_depth = bool(getattr(controller, "needs_depth", True)) or frame_hook is not None

    def result(outcome: TrialOutcome, time: float | None = None) -> TrialResult:
        return TrialResult(
            outcome=outcome,
            traversal_time=time,
            seed=course_spec.seed,
            controller_id=getattr(controller, "id", type(controller).__name__),
            difficulty=course_spec.difficulty.value,
            vehicle=geom.name,
            direction=direction,
        )

    controller.reset()
    tilt_ctl = CameraTiltController()
    try:
        state = initial_state(arena, *start_pose, geom)
    except BoundaryError:
        return result(TrialOutcome.BOUNDARY)
    tilt0 = min(max(CAMERA_TARGET_PITCH - state.pitch, -tilt_ctl.TILT_CLAMP), tilt_ctl.TILT_CLAMP)
    state = replace(state, camera_tilt=tilt0)
    history = [state]

    while True:
        status = trial_status(history, course_length, direction)
        if status is Status.SUCCEEDED:
            return result(TrialOutcome.SUCCEEDED, state.t)
        if status is Status.TIPPED:
            return result(TrialOutcome.TIPPED)
        if status is Status.STUCK:
            return result(TrialOutcome.STUCK)
        if state.t >= timeout - 1e-9:
            return result(TrialOutcome.TIMEOUT)
        try:
            obs = observe(arena, state, geom, depth_size, need_depth, sensor_noise)
            action = controller.act(obs)
            if frame_hook is not None:
                frame_hook(obs, action)
            state = step(state, action, arena, geom)
        except BoundaryError:
            return result(TrialOutcome.BOUNDARY)
        state = replace(
            state, camera_tilt=tilt_ctl.update(state, CAMERA_TARGET_PITCH, TICK_DT)
        )
        history.append(state)


# --- benchmark -------------------------------------------------------------

MODEL_LABEL = {"V6W": "BC6", "V4W": "BC4"}


@dataclass
class BenchConfig:
    vehicles: tuple[str, ...] = ("V6W",)
    difficulties: tuple[Difficulty, ...] = (
        Difficulty.EASY,
        Difficulty.MEDIUM,
        Difficulty.DIFFICULT,
    )
    trials: int = 10
    base_seed: int = 42
    timeout: float = TRIAL_TIMEOUT
    depth_size: int = DEPTH_SIZE
    include_bc: bool = True
    bc_params: dict[str, BcParams] | None = None  # vehicle name -> trained policy
    bc_epochs: int = 15
    controllers: list | None = None  # explicit controller list overrides defaults


@dataclass
class CellStats:
    vehicle: str
    difficulty: str
    controller: str
    successes: int
    trials: int
    mean_time: float | None
    var_time: float | None
    results: list[TrialResult] = field(repr=False, default_factory=list)


@dataclass
class BenchTable:
    cells: list[CellStats]

    def cell(self, vehicle: str, difficulty: str, controller: str) -> CellStats:
        for c in self.cells:
            if (c.vehicle, c.difficulty, c.controller) == (vehicle, difficulty, controller):
                return c
        raise KeyError((vehicle, difficulty, controller))

    def to_text(self) -> str:
        out = io.StringIO()
        vehicles = sorted({c.vehicle for c in self.cells})
        for vehicle in vehicles:
            cells = [c for c in self.cells if c.vehicle == vehicle]
            controllers = list(dict.fromkeys(c.controller for c in cells))
            difficulties = list(dict.fromkeys(c.difficulty for c in cells))
            out.write(f"vehicle {vehicle}: successes / trials (mean+-var of successful times, s)\n")
            header = ["difficulty"] + controllers
            rows = []
            for diff in difficulties:
                row = [diff]
                for ctl in controllers:
                    c = next(
                        x for x in cells if x.difficulty == diff and x.controller == ctl
                    )
                    if c.successes:
                        row.append(
                            f"{c.successes}/{c.trials} ({c.mean_time:.1f}+-{c.var_time:.1f})"
                        )
                    else:
                        row.append(f"0/{c.trials} (-)")
                rows.append(row)
            widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
            for r in [header] + rows:
                out.write("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() + "\n")
            out.write("\n")
        return out.getvalue()

    def to_csv(self) -> str:
        lines = ["vehicle,difficulty,controller,successes,trials,mean_time,var_time"]
        for c in self.cells:
            mean = f"{c.mean_time:.6f}" if c.mean_time is not None else ""
            var = f"{c.var_time:.6f}" if c.var_time is not None else ""
            lines.append(
                f"{c.vehicle},{c.difficulty},{c.controller},{c.successes},{c.trials},{mean},{var}"
            )
        return "\n".join(lines) + "\n"


def collect_policy_samples(
    vehicle: str,
    base_seed: int,
    depth_size: int = DEPTH_SIZE,
    timeout: float = TRIAL_TIMEOUT,
    runs: int = 2,
):
    """Scripted rule-based rollouts on seeded Easy courses, returned as
    (preprocessed depth, (v, omega)) training pairs."""
    geom = PRESETS[vehicle]
    samples = []
    tag = 0x6 if vehicle == "V6W" else 0x4
    for i in range(runs):
        spec = CourseSpec(Difficulty.EASY, derive_seed(base_seed, 0xDE30, tag, i))
        controller = RuleBasedController()

        def hook(obs, action):
            samples.append(
                (preprocess(obs.depth), np.array([action.v, action.omega]))
            )

        run_trial(
            controller,
            geom,
            spec,
            timeout=timeout,
            direction=1 if i % 2 == 0 else -1,
            depth_size=depth_size,
            frame_hook=hook,
        )
    return samples


def train_bench_policies(cfg: BenchConfig) -> dict[str, BcParams]:
    """Train one policy per vehicle from scripted demonstrations."""
    models = {}
    for vehicle in ("V6W", "V4W"):
        samples = collect_policy_samples(
            vehicle, cfg.base_seed, cfg.depth_size, cfg.timeout
        )
        tcfg = TrainConfig(
            epochs=cfg.bc_epochs, seed=derive_seed(cfg.base_seed, 0xBC, ord(vehicle[1]))
        )
        models[vehicle], _ = train(samples, tcfg)
    return models


def _default_controllers(cfg: BenchConfig, models: dict[str, BcParams] | None):
    controllers = [OpenLoopController(), RuleBasedController()]
    if cfg.include_bc and models:
        controllers.append(BcController(models["V6W"], MODEL_LABEL["V6W"]))
        controllers.append(BcController(models["V4W"], MODEL_LABEL["V4W"]))
    return controllers


def run_benchmark(cfg: BenchConfig) -> BenchTable:
    """Full benchmark grid; byte-reproducible for a fixed config."""
    models = cfg.bc_params
    if models is None and cfg.include_bc and cfg.controllers is None:
        models = train_bench_policies(cfg)
    cells: list[CellStats] = []
    for vehicle in cfg.vehicles:
        geom = PRESETS[vehicle]
        controllers = (
            cfg.controllers if cfg.controllers is not None else _default_controllers(cfg, models)
        )
        for difficulty in cfg.difficulties:
            spec = CourseSpec(
                difficulty, derive_seed(cfg.base_seed, list(Difficulty).index(difficulty))
            )
            for controller in controllers:
                results = []
                for trial in range(cfg.trials):
                    direction = 1 if trial < (cfg.trials + 1) // 2 else -1
                    results.append(
                        run_trial(
                            controller,
                            geom,
                            spec,
                            timeout=cfg.timeout,
                            direction=direction,
                            depth_size=cfg.depth_size,
                        )
                    )
                times = [
                    r.traversal_time for r in results if r.outcome is TrialOutcome.SUCCEEDED
                ]
                cells.append(
                    CellStats(
                        vehicle=vehicle,
                        difficulty=difficulty.value,
                        controller=getattr(controller, "id", "?"),
                        successes=len(times),
                        trials=cfg.trials,
                        mean_time=float(np.mean(times)) if times else None,
                        var_time=float(np.var(times)) if times else None,
                        results=results,
                    )
                )
    return BenchTable(cells)


def cross_deploy(
    train_vehicle: str,
    deploy_vehicle: str,
    demos_by_vehicle: dict[str, list],
    cfg: BenchConfig,
) -> BenchTable:
    """Train policies from each vehicle's demonstrations and evaluate both
    on the deploy vehicle: own-data and cross-data rows side by side."""
    models = {}
    for vehicle in (deploy_vehicle, train_vehicle):
        demos = demos_by_vehicle[vehicle]
        tcfg = TrainConfig(
            epochs=cfg.bc_epochs, seed=derive_seed(cfg.base_seed, 0xCD, ord(vehicle[1]))
        )
        models[vehicle], _ = train(demos, tcfg)
    controllers = [
        BcController(models[deploy_vehicle], MODEL_LABEL[deploy_vehicle]),
        BcController(models[train_vehicle], MODEL_LABEL[train_vehicle]),
    ]
    sub = replace(
        cfg, vehicles=(deploy_vehicle,), controllers=controllers, include_bc=True
    )
    return run_benchmark(sub)


# Results reported for the original hardware platforms on the physical
# testbed: successes out of 10 and mean+-variance of successful traversal
# times in seconds.  Reference metadata only; a desk-scale simulation has
# no way (and makes no attempt) to reproduce them.
REFERENCE_HARDWARE_RESULTS = {
    ("V6W", "Easy", "OL"): (5, 20.7, 1.7),
    ("V6W", "Easy", "RB"): (8, 19.2, 3.9),
    ("V6W", "Easy", "BC6"): (9, 13.8, 8.2),
    ("V6W", "Easy", "BC4"): (10, 11.6, 1.9),
    ("V6W", "Medium", "OL"): (6, 15.4, 0.9),
    ("V6W", "Medium", "RB"): (9, 14.8, 2.2),
    ("V6W", "Medium", "BC6"): (9, 14.6, 11.2),
    ("V6W", "Medium", "BC4"): (10, 13.6, 2.3),
    ("V6W", "Difficult", "OL"): (3, 24.1, 2.6),
    ("V6W", "Difficult", "RB"): (6, 14.3, 1.9),
    ("V6W", "Difficult", "BC6"): (6, 15.7, 18.5),
    ("V6W", "Difficult", "BC4"): (9, 14.9, 2.9),
    ("V4W", "Easy", "OL"): (6, 17.7, 3.8),
    ("V4W", "Easy", "RB"): (6, 13.4, 2.5),
    ("V4W", "Easy", "BC6"): (7, 17.2, 6.7),
    ("V4W", "Easy", "BC4"): (9, 14.1, 7.7),
    ("V4W", "Medium", "OL"): (4, 15.6, 14.2),
    ("V4W", "Medium", "RB"): (6, 12.9, 1.8),
    ("V4W", "Medium", "BC6"): (3, 19.2, 10.6),
    ("V4W", "Medium", "BC4"): (8, 13.7, 1.6),
    ("V4W", "Difficult", "OL"): (3, 19.7, 29.4),
    ("V4W", "Difficult", "RB"): (5, 16.8, 20.5),
    ("V4W", "Difficult", "BC6"): (3, 23.3, 43.4),
    ("V4W", "Difficult", "BC4"): (7, 14.9, 8.2),
}
