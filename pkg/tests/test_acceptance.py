"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with its measured runtime (run with `pytest -s` to see the
lines as they complete).  Tolerances and runtime budgets are pinned here,
not configurable.
"""

import itertools
import math
import time

import numpy as np
import pytest

from crawlsim.appld import (
    fit_library,
    fit_segment_params,
    mode_with_recency,
    segment,
)
from crawlsim.bclearn import (
    BcController,
    NetworkSpec,
    TrainConfig,
    constant_params,
    gradient,
    init_params,
    loss,
    preprocess,
    train,
)
from crawlsim.controllers import (
    FsmState,
    Mode,
    Observation,
    OpenLoopController,
    RbParams,
    RuleBasedController,
    rb_act,
)
from crawlsim.dataset import (
    CountMismatchError,
    DataFrame,
    DepthRefError,
    RecordFormatError,
    RecordingSession,
    TimestampError,
    VersionError,
    load as load_demo,
)
from crawlsim.harness import (
    BenchConfig,
    TrialOutcome,
    run_benchmark,
    run_trial,
)
from crawlsim.render import camera_pose, render_depth
from crawlsim.rng import SplitMix64, derive_seed
from crawlsim.terrain import (
    CourseSpec,
    Difficulty,
    HeightMap,
    generate_course,
    heights_at,
)
from crawlsim.vehicle import (
    CLIMB_LIMIT_HIGH,
    CLIMB_LIMIT_LOW,
    PRESETS,
    TICK_DT,
    V4W,
    V6W,
    VehicleState,
    fit_chassis,
    traction,
)

from fd_oracle import fd_gradient, fd_gradient_naive, kink_margin
from test_render import fine_march_oracle

DT = 0.05


def _report(name: str, elapsed: float, budget: float, detail: str = "") -> None:
    extra = f" | {detail}" if detail else ""
    print(f"[PASS] {name}: {elapsed:.2f}s (budget {budget:.0f}s){extra}")
    assert elapsed < budget, f"{name} exceeded its runtime budget"


def test_fsm_reference_sequence():
    """Forced zero ground speed: exact mode/value schedule at 20 Hz."""
    t0 = time.monotonic()
    params = RbParams()
    fsm = FsmState()

    def expected(t):
        tau = round(t % 11.0, 10)
        if tau < 2.0:
            return Mode.FORWARD, 0.5, 0.0
        if tau < 5.0:
            return Mode.RAMP, 0.5 + (0.75 - 0.5) * (tau - 2.0) / 3.0, 0.0
        if tau < 7.0:
            return Mode.BACKUP, -0.5, 0.0
        if tau < 9.0:
            return Mode.STEER_LEFT, 0.75, 0.314
        return Mode.STEER_RIGHT, 0.75, -0.314

    from crawlsim.vehicle import GroundSpeed

    still = GroundSpeed(0.0, 0.0, 0.0)
    for k in range(int(22.0 / DT)):
        t = k * DT
        obs = Observation(None, (0.0,) * 4, still, t)
        action, fsm = rb_act(obs, fsm, params)
        mode, v, omega = expected(t)
        assert fsm.mode is mode, f"mode boundary violated at t={t}"
        assert action.v == pytest.approx(v, abs=1e-12), f"v at t={t}"
        assert action.omega == pytest.approx(omega, abs=1e-12), f"omega at t={t}"
    _report("FSM reference sequence", time.monotonic() - t0, 1.0, "440 ticks, 2 cycles")


def test_gradient_check():
    """Analytic gradient vs central differences over every coordinate."""
    t0 = time.monotonic()
    params = init_params(14)  # fixture chosen with a safe rectifier margin
    gen = SplitMix64(2014)
    batch = []
    for _ in range(4):
        x = np.array(gen.uniforms(32 * 32, 0.1, 1.0)).reshape(32, 32)
        a = np.array([gen.uniform(-0.8, 0.8), gen.uniform(-0.3, 0.3)])
        batch.append((x, a))
    hv = np.array([1.0, 1.0])
    # finite differences are only a derivative estimate away from rectifier
    # kinks; the fixture keeps every pre-activation 20x the FD perturbation
    margin = kink_margin(params, batch)
    assert margin > 2e-5, f"fixture too close to a rectifier kink ({margin:.1e})"

    analytic = gradient(params, batch, hv).vec
    numeric = fd_gradient(params, batch, hv, h=1e-6)
    # the 1e-5 floor only guards coordinates where both gradients vanish;
    # for them the check degenerates to |a - n| < 1e-9 absolute
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-5)
    assert rel.max() < 1e-4, f"max relative error {rel.max():.2e}"

    # validate the incremental oracle against naive differences on a sample
    coords = [int(gen.uniform(0, params.vec.size)) for _ in range(100)]
    naive = fd_gradient_naive(params, batch, hv, coords)
    assert np.abs(numeric[coords] - naive).max() < 1e-8
    _report(
        "Gradient check",
        time.monotonic() - t0,
        30.0,
        f"{params.vec.size} coords, max rel err {rel.max():.1e}",
    )


def test_bc_trainability():
    """Constant-action demo: final loss <= 1% of initial within 50 epochs."""
    t0 = time.monotonic()
    gen = SplitMix64(404)
    samples = []
    for _ in range(200):
        img = np.array(gen.uniforms(64 * 64, 0.5, 5.0)).reshape(64, 64)
        samples.append((img, (0.4, 0.1)))
    cfg = TrainConfig(seed=7)  # defaults: 50 epochs, lr 1e-3, batch 32
    params, curve = train(samples, cfg)
    batch = [(preprocess(x), np.asarray(a)) for x, a in samples]
    initial = loss(init_params(cfg.seed), batch, cfg.h)
    final = loss(params, batch, cfg.h)
    assert final <= 0.01 * initial, f"loss ratio {final / initial:.4f}"
    _report(
        "BC trainability",
        time.monotonic() - t0,
        120.0,
        f"loss {initial:.2f} -> {final:.4f} ({final / initial:.2%})",
    )


def test_depth_render_oracle():
    """100 seeded poses on a Medium course: per-pixel agreement with the
    fine-step march within one cell (0.02 m) at 64x64."""
    t0 = time.monotonic()
    m = generate_course(CourseSpec(Difficulty.MEDIUM, 20))
    assert m.resolution == 0.02
    gen = SplitMix64(derive_seed(20, 0xD9))
    fine_step = 0.05 * m.resolution
    worst = 0.0
    for _ in range(100):
        st = VehicleState(
            x=gen.uniform(0.6, 2.5),
            y=gen.uniform(0.4, 0.9),
            z=gen.uniform(0.0, 0.45),
            roll=gen.uniform(-0.35, 0.35),
            pitch=gen.uniform(-0.35, 0.35),
            yaw=gen.uniform(-math.pi, math.pi),
            wheel_contact=(True,) * 6,
            camera_tilt=gen.uniform(-0.9, -0.1),
        )
        img = render_depth(m, st, V6W, 64, 64)
        pos, rot = camera_pose(st, V6W)
        oracle = fine_march_oracle(m, pos, rot, 64, 64, fine_step)
        worst = max(worst, float(np.abs(img.data - oracle).max()))
        assert worst <= m.resolution, f"depth disagrees by {worst:.4f} m"
    _report(
        "Depth-render oracle",
        time.monotonic() - t0,
        120.0,
        f"100 poses, worst |delta| {worst:.2e} m",
    )


def test_traction_semantics():
    """Exhaustive truth table (contacts x locks x gear x pitch grid) for
    both vehicles, plus lock- and gear-monotonicity on every row."""
    t0 = time.monotonic()

    def oracle(contacts, locks, low, pitch):
        n_axles = len(contacts) // 2
        driving = 0
        for axle in range(n_axles):
            left, right = contacts[2 * axle], contacts[2 * axle + 1]
            lock = locks[0] if axle == 0 else locks[1]
            if (left and right) or (lock and (left or right)):
                driving += 1
        theta = CLIMB_LIMIT_LOW if low else CLIMB_LIMIT_HIGH
        if pitch > theta:
            return 0.0
        return (driving / n_axles) * (1.0 - max(0.0, pitch) / theta)

    pitches = [-0.7, -0.2, 0.0, 0.1, 0.34, 0.36, 0.6, 0.62, 0.8]
    rows = 0
    for n_wheels in (4, 6):
        for contacts in itertools.product([False, True], repeat=n_wheels):
            for locks in itertools.product([False, True], repeat=2):
                for low in (False, True):
                    for pitch in pitches:
                        got = traction(contacts, locks, low, pitch)
                        assert got == oracle(contacts, locks, low, pitch)
                        rows += 1
                        for j in (0, 1):
                            up = list(locks)
                            up[j] = True
                            assert traction(contacts, tuple(up), low, pitch) >= got - 1e-15
                    for pitch in pitches:
                        assert (
                            traction(contacts, locks, True, pitch)
                            >= traction(contacts, locks, False, pitch) - 1e-15
                        )
    _report("Traction semantics", time.monotonic() - t0, 1.0, f"{rows} rows")


def test_chassis_fit():
    """Analytic ramp/step fixtures within 1e-6 rad; non-penetration on
    1000 random poses per difficulty."""
    t0 = time.monotonic()
    res = 0.02
    nx, ny = 301, 201
    xs = np.arange(nx) * res
    ramp = HeightMap(nx, ny, res, (0.0, 0.0), np.tile(0.2 * xs, (ny, 1)))
    _, roll, pitch, _ = fit_chassis(ramp, 3.0, 2.0, 0.0, V6W)
    assert abs(pitch - math.atan(0.2)) < 1e-6
    assert abs(roll) < 1e-6

    h = np.zeros((ny, nx))
    h[101:, :] = 0.1
    stepm = HeightMap(nx, ny, res, (0.0, 0.0), h)
    for geom in (V6W, V4W):
        _, roll, pitch, contacts = fit_chassis(stepm, 3.0, 2.0, 0.0, geom)
        assert abs(abs(roll) - math.atan(0.1 / geom.track_width)) < 1e-6
        assert abs(pitch) < 1e-6
        assert all(contacts)

    checked = 0
    for difficulty in (Difficulty.EASY, Difficulty.MEDIUM, Difficulty.DIFFICULT):
        m = generate_course(CourseSpec(difficulty, 33))
        gen = SplitMix64(derive_seed(500, list(Difficulty).index(difficulty)))
        for _ in range(1000):
            x = gen.uniform(0.9, 2.2)
            geom = V6W if gen.uniform() < 0.5 else V4W
            if geom is V4W:
                y = gen.uniform(0.46, 0.84)
                yaw = gen.uniform(-math.pi, math.pi)
            else:
                y = gen.uniform(0.52, 0.78)
                yaw = gen.uniform(-0.6, 0.6)
            z, roll, pitch, contacts = fit_chassis(m, x, y, yaw, geom)
            offs = geom.wheel_offsets()
            cy, sy = math.cos(yaw), math.sin(yaw)
            wx = np.array([x + cy * ox - sy * oy for ox, oy in offs])
            wy = np.array([y + sy * ox + cy * oy for ox, oy in offs])
            r = 0.5 * geom.wheel_radius
            sx = np.concatenate([wx, wx + r, wx - r, wx, wx])
            syy = np.concatenate([wy, wy, wy, wy + r, wy - r])
            support = heights_at(m, sx, syy).reshape(5, len(offs)).max(axis=0)
            a = math.tan(pitch) * cy - math.tan(roll) * sy
            b = math.tan(pitch) * sy + math.tan(roll) * cy
            plane = z + a * (wx - x) + b * (wy - y)
            assert np.all(plane - support >= -1e-9), "chassis penetrates terrain"
            checked += 1
    _report("Chassis fit", time.monotonic() - t0, 60.0, f"{checked} random poses")


def test_appld_segmentation():
    """Noiseless two-regime demo exact; sigma=0.02 within 5 frames, 20 trials."""
    t0 = time.monotonic()
    series = np.vstack([np.tile([0.5, 0.0], (100, 1)), np.tile([0.2, 0.3], (100, 1))])
    cp = segment(series)
    assert cp.k == 2 and cp.taus == (100,)
    worst = 0
    for trial in range(20):
        gen = SplitMix64(derive_seed(777, trial))
        noisy = series + 0.02 * np.array(gen.gausses(400)).reshape(200, 2)
        cp = segment(noisy)
        assert cp.k == 2, f"trial {trial}: K={cp.k}"
        worst = max(worst, abs(cp.taus[0] - 100))
        assert worst <= 5, f"trial {trial}: tau error {worst}"
    _report("APPLD segmentation", time.monotonic() - t0, 60.0, f"worst |tau err| {worst}")


def _rb_generated_frames(theta, speed, t0, n):
    frames = []
    fsm = FsmState(mode_entry_time=t0)
    from crawlsim.vehicle import GroundSpeed

    for i in range(n):
        t = t0 + i * DT
        obs = Observation(None, (speed,) * 4, GroundSpeed(speed, 0.0, 0.0), t)
        action, fsm = rb_act(obs, fsm, theta)
        frames.append(
            DataFrame(
                t=t, depth_ref="", w=(speed,) * 4, g=(speed, 0.0, 0.0, True, True),
                d=action.d, s=action.s, v=action.v, omega=action.omega,
            )
        )
    return frames


def test_appld_end_to_end():
    """Two-regime controller-generated demo: segmented fits reach ~zero
    loss and their sum never exceeds the single best global fit at the
    same evaluation budget."""
    t0 = time.monotonic()
    th_a = RbParams(v_nominal=0.5)
    th_b = RbParams(v_nominal=0.2)
    frames = _rb_generated_frames(th_a, 0.5, 0.0, 100) + _rb_generated_frames(
        th_b, 0.2, 5.0, 100
    )
    cp = segment(np.array([[f.v, f.omega] for f in frames]))
    assert cp.k == 2 and cp.taus == (100,)

    class Demo:
        pass

    demo = Demo()
    demo.frames = frames
    library, fits = fit_library(demo, cp, budget=2000, seed=11)
    for k, fit in enumerate(fits, start=1):
        assert fit.loss <= 1e-6, f"segment {k} fitted loss {fit.loss:.2e}"
        assert fit.evaluations == 2000
    glob = fit_segment_params(frames, budget=2000, seed=99)
    seg_sum = sum(f.loss for f in fits)
    assert seg_sum <= glob.loss
    _report(
        "APPLD end-to-end",
        time.monotonic() - t0,
        300.0,
        f"sum {seg_sum:.2e} <= global {glob.loss:.2f}",
    )


def test_mode_filter_property():
    """predict_context's mode equals brute force on 1000 random windows."""
    t0 = time.monotonic()

    def brute(window):
        counts = {}
        for c in window:
            counts[c] = counts.get(c, 0) + 1
        best = max(counts.values())
        tied = {c for c, n in counts.items() if n == best}
        for c in reversed(window):
            if c in tied:
                return c

    gen = SplitMix64(31337)
    for _ in range(1000):
        n = 1 + gen.randint(10)
        window = [1 + gen.randint(5) for _ in range(n)]
        assert mode_with_recency(window) == brute(window)
    _report("Mode filter", time.monotonic() - t0, 5.0, "1000 windows")


def test_determinism_and_flat_smoke():
    """Benchmark twice under one seed -> byte-identical reports; Flat smoke
    gives 10/10 for OL, RB, bias-initialized BC with the kinematic time."""
    t0 = time.monotonic()

    def controllers():
        return [
            OpenLoopController(),
            RuleBasedController(),
            BcController(constant_params(0.5, 0.0), "BC"),
        ]

    cfg = BenchConfig(
        vehicles=("V6W",),
        difficulties=(Difficulty.FLAT,),
        trials=10,
        base_seed=42,
        controllers=controllers(),
        depth_size=64,
    )
    table1 = run_benchmark(cfg)
    cfg2 = BenchConfig(
        vehicles=("V6W",),
        difficulties=(Difficulty.FLAT,),
        trials=10,
        base_seed=42,
        controllers=controllers(),
        depth_size=64,
    )
    table2 = run_benchmark(cfg2)
    assert table1.to_text() == table2.to_text()
    assert table1.to_csv() == table2.to_csv()

    expected = 3.1 / 0.5
    for cell in table1.cells:
        assert cell.successes == 10, f"{cell.controller}: {cell.successes}/10"
        for r in cell.results:
            assert r.outcome is TrialOutcome.SUCCEEDED
        if cell.controller == "OL":
            assert cell.mean_time == pytest.approx(expected, abs=TICK_DT + 1e-9)
    _report(
        "Determinism + flat smoke",
        time.monotonic() - t0,
        180.0,
        f"OL mean {table1.cells[0].mean_time:.2f}s vs {expected:.2f}s",
    )


def test_benchmark_shape_full_grid():
    """Default benchmark: 3 difficulties x {OL, RB, BC-own, BC-cross} x 10
    trials from both directions, finished inside 10 minutes at 64x64."""
    t0 = time.monotonic()
    cfg = BenchConfig(base_seed=42)  # defaults: V6W, 3 difficulties, BC on
    table = run_benchmark(cfg)
    elapsed = time.monotonic() - t0

    assert len(table.cells) == 12  # 3 x 4
    difficulties = {c.difficulty for c in table.cells}
    assert difficulties == {"Easy", "Medium", "Difficult"}
    controllers = [c.controller for c in table.cells[:4]]
    assert controllers == ["OL", "RB", "BC6", "BC4"]
    total_trials = sum(c.trials for c in table.cells)
    assert total_trials == 120
    for cell in table.cells:
        assert [r.direction for r in cell.results] == [1] * 5 + [-1] * 5
        assert cell.successes <= cell.trials
        for r in cell.results:
            if r.outcome is TrialOutcome.SUCCEEDED:
                assert r.traversal_time <= cfg.timeout
    text = table.to_text()
    csv = table.to_csv()
    assert "BC6" in text and "BC4" in text
    assert len(csv.splitlines()) == 13
    _report(
        "Benchmark shape",
        elapsed,
        600.0,
        f"120 trials, {sum(c.successes for c in table.cells)} successes",
    )


def test_dataset_round_trip_and_validator():
    """100 recorded frames reload bit-exactly; 5 corruption classes raise
    distinct errors."""
    import shutil
    import tempfile
    from pathlib import Path

    t0 = time.monotonic()
    root = Path(tempfile.mkdtemp(prefix="crawlsim_acc_"))
    try:
        spec = CourseSpec(Difficulty.EASY, 3)
        session = RecordingSession(
            root / "demo", vehicle="V6W", course_seed=3, course_difficulty="Easy"
        )
        result = run_trial(
            RuleBasedController(),
            PRESETS["V6W"],
            spec,
            timeout=5.0,
            depth_size=64,
            frame_hook=session.record_frame,
        )
        demo = session.close()
        assert len(demo.frames) == 100  # 5 s at 20 Hz
        loaded = load_demo(root / "demo")
        assert loaded.manifest.frame_count == 100
        for a, b in zip(demo.frames, loaded.frames):
            assert a == b
        for i in (0, 50, 99):
            assert np.array_equal(demo.depth(i), loaded.depth(i))

        def corrupted(name, mutate):
            path = root / name
            shutil.copytree(root / "demo", path)
            mutate(path)
            return path

        cases = [
            (
                VersionError,
                corrupted(
                    "v",
                    lambda p: (p / "manifest.txt").write_text(
                        (p / "manifest.txt").read_text().replace(
                            "format_version=1", "format_version=2"
                        )
                    ),
                ),
            ),
            (
                CountMismatchError,
                corrupted(
                    "c",
                    lambda p: (p / "manifest.txt").write_text(
                        (p / "manifest.txt").read_text().replace(
                            "frame_count=100", "frame_count=99"
                        )
                    ),
                ),
            ),
            (
                TimestampError,
                corrupted("t", _swap_timestamps),
            ),
            (
                DepthRefError,
                corrupted("d", lambda p: (p / "depth" / "000042.pgm").unlink()),
            ),
            (
                RecordFormatError,
                corrupted("r", _truncate_record),
            ),
        ]
        seen_types = set()
        for expected_type, path in cases:
            with pytest.raises(expected_type):
                load_demo(path)
            seen_types.add(expected_type)
        assert len(seen_types) == 5
    finally:
        shutil.rmtree(root, ignore_errors=True)
    _report("Dataset round-trip", time.monotonic() - t0, 10.0, "100 frames, 5 corruption classes")


def _swap_timestamps(path):
    rec = path / "records.txt"
    lines = rec.read_text().splitlines()
    lines[10], lines[11] = lines[11], lines[10]
    rec.write_text("\n".join(lines) + "\n")


def _truncate_record(path):
    rec = path / "records.txt"
    lines = rec.read_text().splitlines()
    lines[5] = " ".join(lines[5].split()[:10])
    rec.write_text("\n".join(lines) + "\n")
