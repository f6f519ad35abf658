import io
import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from agdrive.errors import ShiftRejected
from agdrive.kinematics import DriveConcept
from agdrive.modctrl import (CONTROLLER_ID, BusFrame, CentralController, Command, ControllerParams, ControlMode,
                             DriveModule, FaultKind, FrameBus, FrameKind, FreeWheelMethod, Heartbeat,
                             LimpHomeScenario, Measurement, ModuleKind, ModuleState, PIGains, ShiftPhase, Telemetry,
                             bus_deliver, limp_home_check, module_step, shift_range, write_frame_log)
from agdrive.powertrain import RPM, WHEEL_MOTOR, motor_torque_limit
from agdrive.transmission import BrakeState, RangeState, wheel_torque
from agdrive.vehicles import axle_module_vehicle, default_rangebox, wheel_module_vehicle

DT = 0.005


def module(**kw):
    kw.setdefault('params', ControllerParams())
    return DriveModule(1, ModuleKind.WHEEL_MODULE, (0,), WHEEL_MOTOR, default_rangebox(), **kw)


def cmd(name, value=None, tick=0, seq=0, target=None):
    return BusFrame(CONTROLLER_ID, FrameKind.COMMAND, Command(name, value, target), tick, seq)


def hb(tick=0):
    return BusFrame(CONTROLLER_ID, FrameKind.HEARTBEAT, Heartbeat(), tick)


def still():
    return Measurement(0.0, 0.0)


def test_off_until_controller_heard():
    m, out, frames = module_step(module(), [], still(), DT)
    assert m.state is ModuleState.OFF and out.motor_torque == 0 and frames == []
    m, _, _ = module_step(m, [hb()], still(), DT)
    assert m.state is ModuleState.STANDBY


def test_enable_goes_to_drive_with_zero_torque():
    m, _, _ = module_step(module(), [hb()], still(), DT)
    m, out, _ = module_step(m, [cmd('enable')], still(), DT)
    assert m.state is ModuleState.DRIVE
    assert out.motor_torque == 0.0
    assert out.energised


def test_step_does_not_mutate_input():
    m0 = module()
    module_step(m0, [cmd('enable')], still(), DT)
    assert m0.state is ModuleState.OFF and m0.tick == 0


def drive_module(**kw):
    m, _, _ = module_step(module(**kw), [cmd('enable')], still(), DT)
    return m


def test_comms_timeout_latches_fault():
    m = drive_module()
    m, _, _ = module_step(m, [cmd('setpoint', 5.0)], still(), DT)
    torques = []
    for _ in range(m.timeout_ticks + 5):
        m, out, _ = module_step(m, [], Measurement(0.0, 0.0), DT)
        torques.append(out.motor_torque)
    assert m.state is ModuleState.FAULT
    assert any('CommsTimeout' in e for e in m.events)
    assert torques[-1] == 0.0
    assert (m.rangebox.brake_b1, m.rangebox.brake_b2) == (BrakeState.OPEN, BrakeState.OPEN)
    # still latched: heartbeats and enable are ignored until reset
    m, out, _ = module_step(m, [hb(), cmd('enable')], still(), DT)
    assert m.state is ModuleState.FAULT and out.motor_torque == 0.0
    m, _, _ = module_step(m, [cmd('reset')], still(), DT)
    assert m.state is ModuleState.STANDBY and m.range is RangeState.RANGE_A


def test_telemetry_period():
    m = drive_module(telemetry_period=4)
    sent = []
    for _ in range(12):
        m, _, frames = module_step(m, [hb()], still(), DT)
        sent += [(f.send_tick, f.seq) for f in frames]
    assert [t for t, _ in sent] == [4, 8, 12]
    assert [s for _, s in sent] == [0, 1, 2]


def test_torque_respects_envelope():
    m = drive_module()
    m, _, _ = module_step(m, [cmd('setpoint', 100.0)], still(), DT)
    for ms in (0.0, 300.0, 600.0):
        m2, out, _ = module_step(m, [hb()], Measurement(0.0, ms), DT)
        assert abs(out.motor_torque) <= motor_torque_limit(WHEEL_MOTOR, ms, m2.thermal.mode) + 1e-9


def test_torque_loop_mode():
    m = drive_module()
    m, _, _ = module_step(m, [cmd('mode', 'torque'), cmd('setpoint', 123.0, seq=1)], still(), DT)
    m, out, _ = module_step(m, [hb()], still(), DT)
    assert m.control_mode is ControlMode.TORQUE_LOOP
    assert out.motor_torque == 123.0


def test_speed_loop_holds_load():
    """Closed loop against a single-wheel plant; the PI must settle on the load-holding torque."""
    J, load = 80.0, 3000.0  # kg m^2 at the wheel, Nm resisting
    m = drive_module()
    m, _, _ = module_step(m, [cmd('setpoint', 2.0)], still(), DT)
    w = 0.0
    ratio = m.ratio
    for k in range(6000):
        frames = [hb(k)] if k % 10 == 0 else []
        m, out, _ = module_step(m, frames, Measurement(w, w * ratio), DT)
        t_wheel = wheel_torque(m.rangebox, out.motor_torque, w * ratio)
        w += (t_wheel - load) / (J + WHEEL_MOTOR.inertia * ratio ** 2) * DT
    assert w == pytest.approx(2.0, rel=1e-4)
    assert out.motor_torque == pytest.approx(load / (ratio * m.efficiency), rel=1e-3)


def test_free_wheel_methods():
    m = drive_module()
    m, out, _ = module_step(m, [cmd('free_wheel')], still(), DT)
    assert m.state is ModuleState.FREE_WHEEL and m.range is RangeState.FREE_WHEEL
    assert out.motor_torque == 0.0 and not out.energised
    p = ControllerParams(free_wheel_method=FreeWheelMethod.TORQUE_LOOP, free_wheel_torque=0.5)
    m = drive_module(params=p)
    m, out, _ = module_step(m, [cmd('free_wheel')], still(), DT)
    assert m.range is RangeState.RANGE_A and out.motor_torque == 0.5


def test_park_needs_standstill():
    m = drive_module()
    m, _, _ = module_step(m, [cmd('park')], Measurement(1.0, 145.8), DT)
    assert m.state is ModuleState.BRAKING and m.range is RangeState.RANGE_A
    m, _, _ = module_step(m, [hb()], Measurement(0.005, 0.73), DT)
    assert m.state is ModuleState.PARKED and m.range is RangeState.PARKED


COMMAND_SET = ['enable', 'disable', 'park', 'free_wheel', 'reset', None]
SPEEDS = [0.0, 0.005, 0.0099, 0.01, 0.3, -0.3, -0.0099]


def test_parked_only_at_standstill_exhaustive():
    """Every command/speed sequence of length 3 from each reachable start; Parked is entered only below threshold."""
    thr = ControllerParams().park_threshold
    starts = [module()]
    m, _, _ = module_step(module(), [hb()], still(), DT)
    starts.append(m)
    count = 0
    for start in starts:
        for seq in itertools.product(itertools.product(COMMAND_SET, SPEEDS), repeat=3):
            m = start
            for name, ws in seq:
                frames = [cmd(name)] if name else [hb()]
                new, _, _ = module_step(m, frames, Measurement(ws, ws * 145.8), DT)
                if new.state is ModuleState.PARKED and m.state is not ModuleState.PARKED:
                    assert abs(ws) < thr
                m = new
                count += 1
    assert count == 2 * 3 * (len(COMMAND_SET) * len(SPEEDS)) ** 3


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(['enable', 'disable', 'park', 'free_wheel', 'setpoint', 'range', None]),
                          st.floats(-5, 5)), max_size=30))
def test_fault_latches_zero_torque(events):
    m = drive_module()
    m.dead = False
    # force a fault through a comms timeout
    for _ in range(m.timeout_ticks + 1):
        m, _, _ = module_step(m, [], still(), DT)
    assert m.state is ModuleState.FAULT
    for name, x in events:
        value = {'setpoint': x, 'range': 'B'}.get(name)
        frames = [cmd(name, value)] if name else [hb()]
        m, out, _ = module_step(m, frames, Measurement(x, x * 145.8), DT)
        assert m.state is ModuleState.FAULT
        assert out.motor_torque == 0.0


def test_shift_rejected_outside_window():
    m = drive_module(params=ControllerParams(shift_speed_window=3.0))
    with pytest.raises(ShiftRejected):
        shift_range(m, RangeState.RANGE_B, 5.0)
    before = (m.state, m.range, m.shift)
    m2, _, _ = module_step(m, [cmd('range', 'B')], Measurement(5.0, 5.0 * m.ratio), DT)
    assert (m2.state, m2.range, m2.shift) == before
    assert any('ShiftRejected' in e for e in m2.events)


def test_shift_rejected_on_overspeed():
    m = drive_module()
    m = module_step(m, [cmd('range', 'B')], still(), DT)[0]
    with pytest.raises(ShiftRejected):
        shift_range(m, RangeState.RANGE_A, 10.0)  # 10 rad/s x 145.8 beyond 6600 rpm
    with pytest.raises(ShiftRejected):
        shift_range(m, RangeState.PARKED, 0.0)


def _run_shift(wheel_speed, target='B'):
    """Module shifting with its wheel held at constant speed; returns the tick log."""
    m = drive_module()
    ms = wheel_speed * m.ratio
    log = []
    frames = [cmd('range', target)]
    for k in range(400):
        m, out, _ = module_step(m, frames + [hb(k)], Measurement(wheel_speed, ms), DT)
        frames = []
        if m.range in (RangeState.RANGE_A, RangeState.RANGE_B) and m.phase in (ShiftPhase.NONE, ShiftPhase.RAMP_UP):
            ms = wheel_speed * m.ratio
        else:
            ms += out.motor_torque / WHEEL_MOTOR.inertia * DT
        log.append((m.phase, m.range, out.motor_torque, ms, out.brakes))
        if m.shift is None and k > 5:
            break
    return m, log


def test_shift_at_standstill():
    m, log = _run_shift(0.0)
    assert m.range is RangeState.RANGE_B and m.shift is None
    phases = [p for p, *_ in log]
    for ph in (ShiftPhase.OPEN, ShiftPhase.SYNC, ShiftPhase.CLOSE, ShiftPhase.RAMP_UP):
        assert ph in phases
    assert all(abs(ms) < 1e-9 for *_, ms, _ in log)


def test_shift_resynchronises_motor():
    v = 10.0
    w = v / 3.6 / 0.78
    box = default_rangebox()
    start_rpm = w * box.range_ratio(RangeState.RANGE_A) / RPM
    end_rpm = w * box.range_ratio(RangeState.RANGE_B) / RPM
    wheel_rpm = 10e3 / 3600 / 0.78 * 60 / (2 * math.pi)
    assert start_rpm == pytest.approx(wheel_rpm * (1 + 147 / 15) * (1 + 150 / 12), rel=1e-9)
    assert end_rpm == pytest.approx(wheel_rpm * (1 + 147 / 15) * (1 + 145 / 47), rel=1e-9)
    m, log = _run_shift(w)
    assert m.range is RangeState.RANGE_B
    opened = [i for i, (p, r, *_) in enumerate(log) if r is RangeState.FREE_WHEEL]
    assert log[opened[0] - 1][2] == 0.0  # torque ramped to zero before the brake opens
    closing = next(i for i, (p, r, *_) in enumerate(log) if r is RangeState.RANGE_B)
    assert abs(log[closing - 1][3] - w * box.range_ratio(RangeState.RANGE_B)) <= ControllerParams().sync_tolerance
    closed_both = [b for *_, b in log if b == (BrakeState.CLOSED, BrakeState.CLOSED)]
    assert not closed_both


def test_bus_latency_zero_same_tick():
    f = cmd('enable', tick=5)
    due, pending = bus_deliver([f], 0, 5)
    assert due == [f] and pending == []


def test_bus_fifo():
    a = BusFrame(3, FrameKind.HEARTBEAT, Heartbeat(), 5, 0)
    b = BusFrame(3, FrameKind.HEARTBEAT, Heartbeat(), 6, 1)
    bus = FrameBus(latency=3)
    bus.send([b, a])
    delivered = {t: bus.deliver(t) for t in range(5, 11)}
    assert delivered[8] == [a] and delivered[9] == [b]
    assert sum(len(v) for v in delivered.values()) == 2


def test_bus_drops_after_fault():
    bus = FrameBus(latency=1)
    bus.fail(2, 10)
    early = BusFrame(2, FrameKind.HEARTBEAT, Heartbeat(), 9)
    late = BusFrame(2, FrameKind.HEARTBEAT, Heartbeat(), 10)
    other = BusFrame(3, FrameKind.HEARTBEAT, Heartbeat(), 10)
    bus.send([early, late, other])
    got = bus.deliver(11)
    assert early in got and other in got and late not in got


frames = st.lists(st.tuples(st.integers(0, 4), st.integers(0, 50)), max_size=40)


@settings(max_examples=100, deadline=None)
@given(frames, st.integers(0, 5))
def test_bus_deterministic_and_fifo(schedule, latency):
    fs = [BusFrame(s, FrameKind.HEARTBEAT, Heartbeat(), t, i) for i, (s, t) in enumerate(schedule)]

    def run():
        bus = FrameBus(latency)
        out = []
        for t in range(60):
            bus.send([f for f in fs if f.send_tick == t])
            out += [(t, f) for f in bus.deliver(t)]
        return out
    a, b = run(), run()
    assert a == b
    for now, f in a:
        assert now == f.send_tick + latency
    for s in range(5):
        seqs = [f.seq for _, f in a if f.sender == s]
        ordered = sorted(seqs, key=lambda q: (fs[q].send_tick, q))
        assert seqs == ordered


def test_frame_validation():
    with pytest.raises(ValueError):
        Command('launch')
    with pytest.raises(TypeError):
        BusFrame(0, FrameKind.TELEMETRY, Heartbeat(), 0)


def test_frame_log_csv():
    bus = FrameBus(0)
    bus.send([cmd('setpoint', 2.5, target=3),
              BusFrame(3, FrameKind.TELEMETRY, Telemetry(1.25, 10.0, ModuleState.DRIVE), 0)])
    bus.deliver(0)
    buf = io.StringIO()
    write_frame_log(bus.log, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == 'tick,send_tick,sender,seq,kind,target,name,value,wheel_speed,motor_torque,state'
    assert lines[1] == '0,0,0,0,command,3,setpoint,2.5,,,'
    assert lines[2] == '0,0,3,0,telemetry,,,,1.25,10.0,drive'


def test_central_controller_schedule():
    c = CentralController(heartbeat_period=5, setpoint_period=5)
    c.command('enable')
    out = []
    for _ in range(10):
        out += c.step(1.0, 1.0, {1: 1.0, 2: 1.0}, DT)
    kinds = [(f.send_tick, f.kind, getattr(f.payload, 'name', None)) for f in out]
    assert kinds[0] == (1, FrameKind.COMMAND, 'enable')
    assert sum(1 for k in kinds if k[1] is FrameKind.HEARTBEAT) == 2
    assert sum(1 for k in kinds if k[2] == 'setpoint') == 4
    assert [f.seq for f in out] == list(range(len(out)))


def test_limp_home_examples():
    wheel, axle = wheel_module_vehicle(), axle_module_vehicle()
    flat = LimpHomeScenario(0.0, 8.0)
    steep = LimpHomeScenario(math.radians(12), 3.0)
    assert limp_home_check(wheel, {3}, flat).feasible
    assert limp_home_check(wheel, {3}, steep).feasible
    assert limp_home_check(axle, {2}, flat).feasible
    v = limp_home_check(axle, {2}, steep)
    assert not v.feasible and str(v).startswith('Infeasible(')
    assert v.tractive_force < v.resistance
    assert not limp_home_check(wheel, {1, 2, 3, 4}, flat).feasible
    with pytest.raises(ValueError):
        limp_home_check(wheel, {9}, flat)


def test_axle_limp_home_threshold_slope():
    """Infeasible above the slope where the remaining axle's traction saturates."""
    axle = axle_module_vehicle()
    verdicts = [limp_home_check(axle, {2}, LimpHomeScenario(math.radians(s), 3.0)).feasible
                for s in range(0, 20)]
    k = verdicts.index(False)
    assert all(verdicts[:k]) and not any(verdicts[k:])
    assert 0 < k < 20


def test_module_validation():
    with pytest.raises(ValueError):
        DriveModule(0, ModuleKind.WHEEL_MODULE, (0,), WHEEL_MOTOR, default_rangebox())
    with pytest.raises(ValueError):
        DriveModule(1, ModuleKind.AXLE_MODULE, (0,), WHEEL_MOTOR, default_rangebox())
    with pytest.raises(ValueError):
        ControllerParams(timeout_periods=0)


def test_fault_kinds():
    assert {k.value for k in FaultKind} == {'total_loss', 'comms_loss'}
    assert PIGains().kp > 0 and DriveConcept.WHEEL_MODULE.value == 'wheel'
