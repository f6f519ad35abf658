"""Per-module controllers, the central controller and the simulated frame bus.

Every module runs the same state machine once per tick, in ascending
module id order. Modules talk to the central controller (id 0) only
through frames on a bus with a fixed delivery latency.
"""
from __future__ import annotations

import copy
import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .errors import ShiftRejected, SpeedOutOfRange
from .powertrain import G, MotorSpec, ThermalBudget, TorqueMode, motor_torque_limit, wheel_load_distribution
from .transmission import BrakeState, RangeBox, RangeState, rangebox_efficiency, rangebox_state

CONTROLLER_ID = 0
PARK_THRESHOLD = 0.01  # rad/s at the wheel


class ModuleKind(enum.Enum):
    AXLE_MODULE = 'axle'
    WHEEL_MODULE = 'wheel'


class ModuleState(enum.Enum):
    OFF = 'off'
    STANDBY = 'standby'
    DRIVE = 'drive'
    BRAKING = 'braking'
    PARKED = 'parked'
    FREE_WHEEL = 'free_wheel'
    FAULT = 'fault'


class ControlMode(enum.Enum):
    SPEED_LOOP = 'speed'
    TORQUE_LOOP = 'torque'


class FreeWheelMethod(enum.Enum):
    MECHANICAL = 'mechanical'   # both range brakes open
    TORQUE_LOOP = 'torque'      # range engaged, small torque setpoint


class ShiftPhase(enum.Enum):
    NONE = 'none'
    RAMP_DOWN = 'ramp_down'
    OPEN = 'open'
    SYNC = 'sync'
    CLOSE = 'close'
    RAMP_UP = 'ramp_up'


class FrameKind(enum.Enum):
    TELEMETRY = 'telemetry'
    COMMAND = 'command'
    HEARTBEAT = 'heartbeat'


class FaultKind(enum.Enum):
    TOTAL_LOSS = 'total_loss'
    COMMS_LOSS = 'comms_loss'


COMMANDS = ('enable', 'disable', 'mode', 'setpoint', 'range', 'steer', 'park', 'free_wheel', 'reset')


# frames

@dataclass(frozen=True)
class Telemetry:
    wheel_speed: float
    motor_torque: float
    state: ModuleState


@dataclass(frozen=True)
class Command:
    name: str
    value: object = None
    target: Optional[int] = None  # None broadcasts

    def __post_init__(self):
        if self.name not in COMMANDS:
            raise ValueError(f'unknown command {self.name!r}')


@dataclass(frozen=True)
class Heartbeat:
    pass


PAYLOAD_TYPES = {FrameKind.TELEMETRY: Telemetry, FrameKind.COMMAND: Command, FrameKind.HEARTBEAT: Heartbeat}


@dataclass(frozen=True)
class BusFrame:
    sender: int
    kind: FrameKind
    payload: Union[Telemetry, Command, Heartbeat]
    send_tick: int
    seq: int = 0

    def __post_init__(self):
        if not isinstance(self.payload, PAYLOAD_TYPES[self.kind]):
            raise TypeError(f'{self.kind.value} frame carries {type(self.payload).__name__}')


@dataclass(frozen=True)
class FaultInjection:
    module_id: int
    at_time: float
    kind: FaultKind


def bus_deliver(in_flight: Sequence[BusFrame], latency: int, now: int, failures=None):
    """Split in-flight frames into (delivered now, still in flight).

    ``failures`` maps a module id to the tick its fault struck; frames that
    module sent at or after that tick are dropped. Delivered frames are
    ordered by send tick, then sender, then sequence number.
    """
    if latency < 0:
        raise ValueError('latency must be >= 0')
    failures = failures or {}
    due, pending = [], []
    for f in in_flight:
        cut = failures.get(f.sender)
        if cut is not None and f.send_tick >= cut:
            continue
        (due if f.send_tick + latency <= now else pending).append(f)
    due.sort(key=lambda f: (f.send_tick, f.sender, f.seq))
    return due, pending


class FrameBus:
    """Latency-modelled bus with a delivery log."""

    def __init__(self, latency: int = 1, keep_log: bool = True):
        if latency < 0:
            raise ValueError('latency must be >= 0')
        self.latency = latency
        self.in_flight: list[BusFrame] = []
        self.failures: dict[int, int] = {}
        self.keep_log = keep_log
        self.log: list[tuple[int, BusFrame]] = []

    def send(self, frames: Sequence[BusFrame]):
        self.in_flight.extend(frames)

    def fail(self, module_id: int, tick: int):
        self.failures.setdefault(module_id, tick)

    def deliver(self, now: int) -> list[BusFrame]:
        due, self.in_flight = bus_deliver(self.in_flight, self.latency, now, self.failures)
        if self.keep_log:
            self.log.extend((now, f) for f in due)
        return due


FRAME_LOG_COLUMNS = ('tick', 'send_tick', 'sender', 'seq', 'kind', 'target', 'name', 'value',
                     'wheel_speed', 'motor_torque', 'state')


def _fmt(v):
    if v is None:
        return ''
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ' '.join(_fmt(x) for x in v)
    return str(v)


def write_frame_log(log, fh):
    """One CSV row per delivered frame; fields not used by a frame kind stay empty."""
    w = csv.writer(fh, lineterminator='\n')
    w.writerow(FRAME_LOG_COLUMNS)
    for tick, f in log:
        p = f.payload
        row = [tick, f.send_tick, f.sender, f.seq, f.kind.value, '', '', '', '', '', '']
        if isinstance(p, Command):
            row[5:8] = [_fmt(p.target), p.name, _fmt(p.value)]
        elif isinstance(p, Telemetry):
            row[8:11] = [_fmt(p.wheel_speed), _fmt(p.motor_torque), p.state.value]
        w.writerow(row)


# module

@dataclass(frozen=True)
class PIGains:
    kp: float = 400.0   # Nm motor torque per rad/s wheel-speed error
    ki: float = 200.0   # Nm per rad


@dataclass(frozen=True)
class ControllerParams:
    gains: PIGains = PIGains()
    timeout_periods: int = 10
    park_threshold: float = PARK_THRESHOLD
    free_wheel_method: FreeWheelMethod = FreeWheelMethod.MECHANICAL
    free_wheel_torque: float = 0.5      # Nm, for the torque-loop method
    shift_ramp_ticks: int = 20
    sync_time_constant: float = 0.02    # s
    sync_tolerance: float = 2.0         # rad/s at the motor
    shift_speed_window: float = math.inf  # rad/s at the wheel
    brake_ramp: float = 1.0             # fraction of torque limit used while braking

    def __post_init__(self):
        if self.timeout_periods < 1 or self.shift_ramp_ticks < 1:
            raise ValueError('timeout_periods and shift_ramp_ticks must be >= 1')
        if self.park_threshold <= 0 or self.sync_tolerance <= 0:
            raise ValueError('park_threshold and sync_tolerance must be > 0')


@dataclass(frozen=True)
class ShiftPlan:
    target: RangeState
    target_ratio: float
    phases: tuple[ShiftPhase, ...] = (ShiftPhase.RAMP_DOWN, ShiftPhase.OPEN, ShiftPhase.SYNC,
                                      ShiftPhase.CLOSE, ShiftPhase.RAMP_UP)


@dataclass(frozen=True)
class Measurement:
    wheel_speed: float          # rad/s, driveline side (mean over the module's wheels)
    motor_speed: float          # rad/s
    load: float = 0.0           # Nm at the wheel, informational


@dataclass(frozen=True)
class ModuleOutput:
    motor_torque: float
    brakes: tuple[BrakeState, BrakeState]
    steering: tuple[float, ...]
    energised: bool


@dataclass
class DriveModule:
    module_id: int
    kind: ModuleKind
    wheels: tuple[int, ...]
    motor: MotorSpec
    rangebox: RangeBox
    state: ModuleState = ModuleState.OFF
    control_mode: ControlMode = ControlMode.SPEED_LOOP
    setpoint: float = 0.0
    steering_angle: tuple[float, ...] = ()
    telemetry_period: int = 10
    params: ControllerParams = ControllerParams()
    differential_lock: bool = False
    tick: int = 0
    integrator: float = 0.0
    last_heard: int = 0
    torque: float = 0.0
    shift: Optional[ShiftPlan] = None
    phase: ShiftPhase = ShiftPhase.NONE
    phase_ticks: int = 0
    ramp_from: float = 0.0
    dead: bool = False
    seq: int = 0
    thermal: Optional[ThermalBudget] = None
    events: tuple[str, ...] = ()

    def __post_init__(self):
        if self.module_id == CONTROLLER_ID:
            raise ValueError('module id 0 is reserved for the central controller')
        if self.kind is ModuleKind.WHEEL_MODULE and len(self.wheels) != 1:
            raise ValueError('a wheel module drives exactly one wheel')
        if self.kind is ModuleKind.AXLE_MODULE and len(self.wheels) != 2:
            raise ValueError('an axle module drives exactly two wheels')
        if self.telemetry_period < 1:
            raise ValueError('telemetry_period must be >= 1')
        if not self.steering_angle:
            self.steering_angle = (0.0,) * len(self.wheels)
        if self.thermal is None:
            self.thermal = ThermalBudget(self.motor.overload_budget, self.motor.overload_budget)

    @property
    def range(self) -> RangeState:
        return rangebox_state(self.rangebox)

    @property
    def ratio(self) -> float:
        return self.rangebox.range_ratio(self.range)

    @property
    def efficiency(self) -> float:
        return rangebox_efficiency(self.rangebox)

    @property
    def timeout_ticks(self) -> int:
        return self.params.timeout_periods * self.telemetry_period


def torque_limit(mod: DriveModule, motor_speed: float) -> float:
    try:
        return motor_torque_limit(mod.motor, motor_speed, mod.thermal.mode)
    except SpeedOutOfRange:
        return 0.0


def shift_range(mod: DriveModule, target: RangeState, wheel_speed: float) -> ShiftPlan:
    """Plan a range change; the module then walks the plan's phases tick by tick.

    Raises ShiftRejected when the target range would overspeed the motor or
    the wheel speed lies outside the configured shift window.
    """
    if target not in (RangeState.RANGE_A, RangeState.RANGE_B):
        raise ShiftRejected(f'cannot shift into {target.name}')
    if mod.state is not ModuleState.DRIVE:
        raise ShiftRejected(f'module {mod.module_id} is {mod.state.value}, not drive')
    ratio = mod.rangebox.range_ratio(target)
    if abs(wheel_speed) > mod.params.shift_speed_window:
        raise ShiftRejected(f'wheel speed {abs(wheel_speed):.2f} rad/s outside shift window')
    if abs(ratio * wheel_speed) > mod.motor.max_speed:
        raise ShiftRejected(f'target motor speed {abs(ratio * wheel_speed):.0f} rad/s above max '
                            f'{mod.motor.max_speed:.0f} rad/s')
    return ShiftPlan(target, ratio)


def _event(m: DriveModule, text: str):
    m.events = m.events + (f'{m.tick}:m{m.module_id}:{text}',)


def _apply_command(m: DriveModule, cmd: Command, meas: Measurement):
    name, value = cmd.name, cmd.value
    if m.state is ModuleState.FAULT:
        if name == 'reset':
            m.state = ModuleState.STANDBY
            m.integrator = 0.0
            m.shift, m.phase = None, ShiftPhase.NONE
            m.rangebox = m.rangebox.select(RangeState.RANGE_A)
        return
    if name == 'enable' and m.state in (ModuleState.STANDBY, ModuleState.PARKED, ModuleState.FREE_WHEEL):
        m.state = ModuleState.DRIVE
        m.integrator = 0.0
        m.torque = 0.0
        if m.range not in (RangeState.RANGE_A, RangeState.RANGE_B):
            m.rangebox = m.rangebox.select(RangeState.RANGE_A)
    elif name == 'disable' and m.state in (ModuleState.DRIVE, ModuleState.FREE_WHEEL):
        m.state = ModuleState.STANDBY
    elif name == 'mode':
        mode = ControlMode(value)
        if mode is not m.control_mode:
            m.control_mode = mode
            m.integrator = 0.0
    elif name == 'setpoint':
        m.setpoint = float(value)
    elif name == 'steer':
        m.steering_angle = tuple(float(a) for a in value)
    elif name == 'range':
        target = RangeState(value)
        if target is m.range or (m.shift is not None and m.shift.target is target):
            return
        try:
            m.shift = shift_range(m, target, meas.wheel_speed)
        except ShiftRejected as exc:
            _event(m, f'ShiftRejected({exc})')
            return
        m.phase, m.phase_ticks, m.ramp_from = ShiftPhase.RAMP_DOWN, 0, m.torque
    elif name == 'park' and m.state in (ModuleState.DRIVE, ModuleState.STANDBY, ModuleState.FREE_WHEEL):
        m.shift, m.phase = None, ShiftPhase.NONE
        m.state = ModuleState.BRAKING
        m.integrator = 0.0
        if m.range not in (RangeState.RANGE_A, RangeState.RANGE_B):
            m.rangebox = m.rangebox.select(RangeState.RANGE_A)
    elif name == 'free_wheel' and m.state in (ModuleState.DRIVE, ModuleState.STANDBY):
        m.shift, m.phase = None, ShiftPhase.NONE
        m.state = ModuleState.FREE_WHEEL
        if m.params.free_wheel_method is FreeWheelMethod.MECHANICAL:
            m.rangebox = m.rangebox.select(RangeState.FREE_WHEEL)


def _speed_loop(m: DriveModule, target: float, meas: Measurement, dt: float) -> float:
    limit = torque_limit(m, meas.motor_speed)
    g = m.params.gains
    err = target - meas.wheel_speed
    u = g.kp * err + m.integrator
    t = max(-limit, min(limit, u))
    # conditional integration: freeze while saturated in the direction of the error
    if t == u or (u > limit and err < 0) or (u < -limit and err > 0):
        m.integrator += g.ki * err * dt
        m.integrator = max(-limit, min(limit, m.integrator))
    return t


def _drive_torque(m: DriveModule, meas: Measurement, dt: float) -> float:
    if m.control_mode is ControlMode.TORQUE_LOOP:
        limit = torque_limit(m, meas.motor_speed)
        return max(-limit, min(limit, m.setpoint))
    return _speed_loop(m, m.setpoint, meas, dt)


def _shift_torque(m: DriveModule, meas: Measurement, dt: float) -> float:
    p = m.params
    plan = m.shift
    if m.phase is ShiftPhase.RAMP_DOWN:
        m.phase_ticks += 1
        frac = max(0.0, 1.0 - m.phase_ticks / p.shift_ramp_ticks)
        if frac == 0.0:
            m.phase, m.phase_ticks = ShiftPhase.OPEN, 0
        return m.ramp_from * frac
    if m.phase is ShiftPhase.OPEN:
        m.rangebox = m.rangebox.select(RangeState.FREE_WHEEL)
        m.phase = ShiftPhase.SYNC
        return 0.0
    if m.phase is ShiftPhase.SYNC:
        target = plan.target_ratio * meas.wheel_speed
        err = target - meas.motor_speed
        if abs(err) <= p.sync_tolerance:
            m.phase = ShiftPhase.CLOSE
            return 0.0
        tau = max(p.sync_time_constant, 2 * dt)
        limit = torque_limit(m, meas.motor_speed)
        return max(-limit, min(limit, m.motor.inertia * err / tau))
    if m.phase is ShiftPhase.CLOSE:
        m.rangebox = m.rangebox.select(plan.target)
        m.phase, m.phase_ticks = ShiftPhase.RAMP_UP, 0
        m.integrator = 0.0
        return 0.0
    # RAMP_UP
    m.phase_ticks += 1
    frac = min(1.0, m.phase_ticks / p.shift_ramp_ticks)
    t = _drive_torque(m, meas, dt) * frac
    if frac >= 1.0:
        m.phase, m.shift = ShiftPhase.NONE, None
    return t


def module_step(mod: DriveModule, delivered: Sequence[BusFrame], meas: Measurement, dt: float):
    """Advance one module by one tick.

    Returns ``(module', output, frames)``; the input module is not modified.
    Faults are states: a comms timeout latches FAULT with zero torque and
    open range brakes until an explicit reset.
    """
    if dt <= 0:
        raise ValueError('dt must be > 0')
    m = copy.copy(mod)
    m.tick = mod.tick + 1
    if m.dead:
        m.state = ModuleState.FAULT
        m.torque = 0.0
        return m, ModuleOutput(0.0, (BrakeState.OPEN, BrakeState.OPEN), m.steering_angle, False), []

    for f in delivered:
        if f.sender != CONTROLLER_ID:
            continue
        m.last_heard = m.tick
        if m.state is ModuleState.OFF:
            m.state = ModuleState.STANDBY
        if f.kind is FrameKind.COMMAND and f.payload.target in (None, m.module_id):
            _apply_command(m, f.payload, meas)

    if m.state not in (ModuleState.OFF, ModuleState.FAULT) and m.tick - m.last_heard > m.timeout_ticks:
        m.state = ModuleState.FAULT
        _event(m, 'CommsTimeout')

    torque = 0.0
    energised = m.state not in (ModuleState.OFF, ModuleState.FAULT, ModuleState.PARKED)
    if m.state is ModuleState.FAULT:
        m.shift, m.phase = None, ShiftPhase.NONE
        if m.range is not RangeState.FREE_WHEEL:
            m.rangebox = m.rangebox.select(RangeState.FREE_WHEEL)
    elif m.state is ModuleState.DRIVE:
        torque = _shift_torque(m, meas, dt) if m.shift is not None else _drive_torque(m, meas, dt)
    elif m.state is ModuleState.BRAKING:
        if abs(meas.wheel_speed) < m.params.park_threshold:
            m.state = ModuleState.PARKED
            m.rangebox = m.rangebox.select(RangeState.PARKED)
            energised = False
        else:
            torque = _speed_loop(m, 0.0, meas, dt) * m.params.brake_ramp
    elif m.state is ModuleState.FREE_WHEEL:
        if m.params.free_wheel_method is FreeWheelMethod.TORQUE_LOOP:
            torque = m.params.free_wheel_torque
        else:
            energised = False

    m.torque = torque
    m.thermal = copy.copy(m.thermal)
    m.thermal.update(torque * meas.motor_speed, m.motor.continuous_power, dt)
    out = ModuleOutput(torque, (m.rangebox.brake_b1, m.rangebox.brake_b2), m.steering_angle, energised)

    frames = []
    if m.state is not ModuleState.OFF and m.tick % m.telemetry_period == 0:
        frames.append(BusFrame(m.module_id, FrameKind.TELEMETRY,
                               Telemetry(meas.wheel_speed, torque, m.state), m.tick, m.seq))
        m.seq += 1
    return m, out, frames


# central controller

@dataclass
class CentralController:
    """Sends heartbeats, commands and wheel-speed setpoints derived from a vehicle-speed target.

    A bounded outer integral on the measured vehicle speed trims out the
    slip the module speed loops cannot see.
    """
    heartbeat_period: int = 10
    setpoint_period: int = 10
    outer_gain: float = 0.5          # 1/s
    outer_bound: float = 0.15        # fraction of the target speed
    tick: int = 0
    seq: int = 0
    correction: float = 0.0
    queue: list = field(default_factory=list)

    def command(self, name: str, value=None, target: Optional[int] = None):
        self.queue.append(Command(name, value, target))

    def step(self, vehicle_speed: float, target_speed: Optional[float], wheel_setpoints, dt: float):
        """Emit this tick's frames. ``wheel_setpoints`` maps module id to a unit-speed setpoint."""
        self.tick += 1
        frames = []

        def emit(kind, payload):
            frames.append(BusFrame(CONTROLLER_ID, kind, payload, self.tick, self.seq))
            self.seq += 1

        for cmd in self.queue:
            emit(FrameKind.COMMAND, cmd)
        self.queue = []
        if target_speed is not None:
            if target_speed == 0:
                self.correction = 0.0
            else:
                bound = self.outer_bound * abs(target_speed)
                err = target_speed - vehicle_speed
                # trim only near the target so acceleration transients do not wind it up
                if abs(err) <= self.outer_bound * abs(target_speed):
                    self.correction += self.outer_gain * err * dt
                    self.correction = max(-bound, min(bound, self.correction))
            if self.tick % self.setpoint_period == 0:
                v = target_speed + self.correction
                for mid in sorted(wheel_setpoints):
                    emit(FrameKind.COMMAND, Command('setpoint', wheel_setpoints[mid] * v, mid))
        if self.tick % self.heartbeat_period == 0:
            emit(FrameKind.HEARTBEAT, Heartbeat())
        return frames


# limp home

@dataclass(frozen=True)
class LimpHomeScenario:
    longitudinal_slope: float = 0.0   # rad, uphill positive
    target_speed: float = 8.0         # km/h
    side_slope: float = 0.0


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    reason: str
    tractive_force: float
    resistance: float

    def __str__(self):
        return 'Feasible' if self.feasible else f'Infeasible({self.reason})'


def module_tractive_force(mod: DriveModule, wheel_speed: float, loads, mu: float, r: float) -> float:
    """Continuous tractive force (N) one module can put on the ground at a wheel speed."""
    best = 0.0
    for state in (RangeState.RANGE_A, RangeState.RANGE_B):
        ratio = mod.rangebox.range_ratio(state)
        motor_speed = ratio * wheel_speed
        try:
            limit = motor_torque_limit(mod.motor, motor_speed, TorqueMode.CONTINUOUS)
        except SpeedOutOfRange:
            continue
        best = max(best, limit * ratio * mod.rangebox.range_efficiency(state) / r)
    grip = [mu * loads[i] for i in mod.wheels]
    if mod.kind is ModuleKind.AXLE_MODULE and not mod.differential_lock:
        traction = len(grip) * min(grip)  # open differential splits torque equally
    else:
        traction = sum(grip)
    return min(best, traction)


def limp_home_check(config, failed, scenario: LimpHomeScenario) -> Feasibility:
    """Quasi-static check that the surviving modules can hold a target speed.

    ``config`` needs ``mass``, ``geometry``, ``modules`` and ``tire`` (with
    ``mu_peak`` and ``rolling_resistance``).
    """
    ids = {m.module_id for m in config.modules}
    failed = set(failed)
    if not failed <= ids:
        raise ValueError(f'unknown module ids {sorted(failed - ids)}')
    W = config.mass * G
    a = scenario.longitudinal_slope
    resistance = W * (math.sin(a) + config.tire.rolling_resistance * math.cos(a))
    loads = wheel_load_distribution(config.mass, config.geometry, scenario.side_slope, a)
    r = config.geometry.rolling_radius
    omega = scenario.target_speed / 3.6 / r
    force = math.fsum(module_tractive_force(m, omega, loads, config.tire.mu_peak, r)
                      for m in config.modules if m.module_id not in failed)
    if failed == ids:
        return Feasibility(False, 'no operational module', 0.0, resistance)
    if force < resistance:
        return Feasibility(False, f'tractive force {force / 1e3:.1f} kN below resistance '
                                  f'{resistance / 1e3:.1f} kN', force, resistance)
    return Feasibility(True, '', force, resistance)
