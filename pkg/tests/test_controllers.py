import pytest

from crawlsim.controllers import (
    FsmState,
    Mode,
    Observation,
    OpenLoopController,
    RbParams,
    RuleBasedController,
    load_rb_params,
    ol_act,
    rb_act,
    save_rb_params,
)
from crawlsim.errors import ParameterError
from crawlsim.rng import SplitMix64
from crawlsim.vehicle import GroundSpeed, OMEGA_MAX, V_MAX

DT = 0.05


def obs(t, speed=0.0):
    return Observation(depth=None, w=(speed,) * 4, g=GroundSpeed(speed, 0.0, 0.0), t=t)


def test_ol_act_constant_and_perception_free():
    a0 = ol_act(0.0)
    assert (a0.v, a0.omega, a0.d, a0.s) == (0.5, 0.0, (True, True), True)
    assert ol_act(37.2) == a0
    assert ol_act(5.0, obs(5.0, speed=0.4)) == a0


def test_rb_defaults_match_documented_constants():
    p = RbParams()
    assert (p.v_nominal, p.v_boost) == (0.5, 0.75)
    assert (p.t_stuck, p.t_ramp_fail, p.t_backup, p.t_steer) == (2.0, 3.0, 2.0, 2.0)
    assert p.v_backup == 0.5
    assert p.steer_recover == 0.314
    assert p.stuck_speed_eps == 0.02


def test_rb_params_invariants():
    with pytest.raises(ParameterError):
        RbParams(v_boost=0.4)  # below nominal
    with pytest.raises(ParameterError):
        RbParams(t_stuck=0.0)


def test_rb_params_config_round_trip(tmp_path):
    p = RbParams(v_nominal=0.4, v_boost=0.9, steer_recover=0.2)
    save_rb_params(p, tmp_path / "rb.json")
    assert load_rb_params(tmp_path / "rb.json") == p


def reference_cycle(t):
    """Expected (mode, v, omega) under a forced zero-speed signal."""
    tau = t % 11.0
    if tau < 2.0:
        return Mode.FORWARD, 0.5, 0.0
    if tau < 5.0:
        return Mode.RAMP, 0.5 + 0.25 * (tau - 2.0) / 3.0, 0.0
    if tau < 7.0:
        return Mode.BACKUP, -0.5, 0.0
    if tau < 9.0:
        return Mode.STEER_LEFT, 0.75, 0.314
    return Mode.STEER_RIGHT, 0.75, -0.314


def test_fsm_reference_sequence_tick_by_tick():
    fsm = FsmState()
    params = RbParams()
    for k in range(0, int(22.0 / DT)):
        t = k * DT
        action, fsm = rb_act(obs(t, 0.0), fsm, params)
        mode, v, omega = reference_cycle(round(t, 10))
        assert fsm.mode is mode, f"t={t}"
        assert action.v == pytest.approx(v, abs=1e-12), f"t={t}"
        assert action.omega == pytest.approx(omega, abs=1e-12), f"t={t}"


def test_ramp_linearity_exact():
    fsm = FsmState()
    params = RbParams()
    t = 0.0
    # drive into Ramp
    for k in range(41):
        action, fsm = rb_act(obs(k * DT), fsm, params)
    assert fsm.mode is Mode.RAMP
    entry = fsm.mode_entry_time
    for k in range(41, 100):
        t = k * DT
        action, fsm = rb_act(obs(t), fsm, params)
        if fsm.mode is not Mode.RAMP:
            break
        expect = params.v_nominal + (params.v_boost - params.v_nominal) * (t - entry) / params.t_ramp_fail
        assert action.v == expect


def test_ramp_aborts_on_recovery_but_backup_completes():
    params = RbParams()
    fsm = FsmState()
    for k in range(45):  # 0 .. 2.2 s: in Ramp
        action, fsm = rb_act(obs(k * DT), fsm, params)
    assert fsm.mode is Mode.RAMP
    action, fsm = rb_act(obs(45 * DT, speed=0.3), fsm, params)
    assert fsm.mode is Mode.FORWARD  # recovery aborts the ramp

    # now run to Backup and keep the speed high: Backup still completes
    fsm = FsmState(mode=Mode.BACKUP, mode_entry_time=10.0)
    action, fsm = rb_act(obs(10.5, speed=0.5), fsm, params)
    assert fsm.mode is Mode.BACKUP
    assert action.v == -params.v_backup
    action, fsm = rb_act(obs(12.0, speed=0.5), fsm, params)
    assert fsm.mode is Mode.STEER_LEFT


def test_stuck_detection_requires_continuity():
    params = RbParams()
    fsm = FsmState()
    t = 0.0
    for k in range(30):  # 1.5 s stuck
        _, fsm = rb_act(obs(k * DT), fsm, params)
    # brief motion resets the stuck clock
    _, fsm = rb_act(obs(30 * DT, speed=0.5), fsm, params)
    for k in range(31, 65):  # another 1.7 s stuck: still Forward
        _, fsm = rb_act(obs(k * DT), fsm, params)
    assert fsm.mode is Mode.FORWARD
    for k in range(65, 75):
        _, fsm = rb_act(obs(k * DT), fsm, params)
    assert fsm.mode is Mode.RAMP


def test_output_bounds_for_arbitrary_valid_params():
    gen = SplitMix64(5150)
    for _ in range(50):
        v_nom = gen.uniform(0.05, 1.0)
        params = RbParams(
            v_nominal=v_nom,
            v_boost=gen.uniform(v_nom, 1.0),
            t_stuck=gen.uniform(0.1, 4.0),
            t_ramp_fail=gen.uniform(0.1, 4.0),
            t_backup=gen.uniform(0.1, 4.0),
            v_backup=gen.uniform(0.05, 1.0),
            steer_recover=gen.uniform(0.01, 0.35),
            t_steer=gen.uniform(0.1, 4.0),
            stuck_speed_eps=gen.uniform(0.001, 0.1),
        )
        fsm = FsmState()
        for k in range(400):
            speed = 0.0 if (k // 40) % 2 == 0 else gen.uniform(0.0, 0.8)
            action, fsm = rb_act(obs(k * DT, speed), fsm, params)
            assert -V_MAX <= action.v <= V_MAX
            assert -OMEGA_MAX <= action.omega <= OMEGA_MAX
            assert action.d == (True, True) and action.s is True


def test_rb_act_rejects_time_travel():
    fsm = FsmState(mode_entry_time=5.0)
    with pytest.raises(ParameterError):
        rb_act(obs(4.0), fsm, RbParams())


def test_controller_wrappers_reset_and_anchor():
    ctl = RuleBasedController()
    a = ctl.act(obs(7.0, 0.5))
    assert a.v == 0.5
    assert ctl.fsm.mode_entry_time == 7.0
    ctl.reset()
    assert ctl.fsm.mode_entry_time == 0.0
    assert OpenLoopController().act(obs(3.0)).v == 0.5
