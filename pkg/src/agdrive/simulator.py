"""Fixed-step vehicle simulation: longitudinal dynamics, kinematic yaw, tire slip,
module controllers on the frame bus, DC bus energy ledger and metrics.

Each tick the wheel speeds and the vehicle speed are solved together by
backward Euler. Tire force is linear in slip below the peak and saturated
above it; the saturated set is found by a short active-set iteration. The
rolling resistance is treated as Coulomb friction so it can stop the
vehicle but never reverse it.
"""
from __future__ import annotations

import copy
import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .duty import RENIUS_DEFAULT, EfficiencyTarget, TargetLabel, bernhard_from_renius, target_eta
from .errors import BrakeOverload, ConfigError
from .kinematics import (WHEELS, DriveConcept, SteeringMode, VehicleGeometry, ackermann_angles, estimate_icr,
                         speed_factors, steering_mode_allowed, wheel_positions)
from .modctrl import (CONTROLLER_ID, CentralController, ControlMode, DriveModule, FaultInjection, FaultKind,
                      FrameBus, LimpHomeScenario, Measurement, ModuleKind, limp_home_check,
                      module_step)
from .powertrain import G, DcBus, motor_losses, wheel_load_distribution
from .transmission import RangeState, park_reaction, wheel_torque

KMH = 1 / 3.6
LEDGER_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TireSpec:
    mu_peak: float = 0.6
    slip_at_peak: float = 0.1
    rolling_resistance: float = 0.08
    wheel_inertia: float = 80.0      # kg m^2 per wheel
    slip_speed_floor: float = 0.1    # m/s, keeps slip finite near standstill

    def __post_init__(self):
        if not (self.mu_peak > 0 and self.slip_at_peak > 0 and self.slip_speed_floor > 0):
            raise ValueError('mu_peak, slip_at_peak and slip_speed_floor must be > 0')
        if self.rolling_resistance < 0 or self.wheel_inertia <= 0:
            raise ValueError('rolling_resistance must be >= 0 and wheel_inertia > 0')


def traction_force(tire: TireSpec, slip: float, normal_load: float) -> float:
    """Longitudinal tire force (N): linear up to the peak slip, saturated beyond."""
    if normal_load < 0:
        raise ValueError('normal_load must be >= 0')
    x = max(-1.0, min(1.0, slip / tire.slip_at_peak))
    return x * tire.mu_peak * normal_load


class BrakePosition(enum.Enum):
    UPSTREAM = 'upstream'   # range brakes ahead of the axle differential
    WHEEL = 'wheel'         # separate parking brakes at the wheels


@dataclass
class VehicleConfig:
    geometry: VehicleGeometry
    mass: float
    concept: DriveConcept
    modules: tuple
    tire: TireSpec = TireSpec()
    dc_bus: DcBus = DcBus()
    steering_mode: SteeringMode = SteeringMode.FRONT_ONLY
    max_steer: float = 35.0          # deg
    brake_position: BrakePosition = BrakePosition.WHEEL
    bus_latency: int = 1             # ticks
    name: str = ''

    def __post_init__(self):
        self.modules = tuple(self.modules)
        if not self.mass > 0:
            raise ConfigError('mass must be > 0', path='vehicle.mass')
        if self.bus_latency < 0:
            raise ConfigError('bus_latency must be >= 0', path='vehicle.bus_latency')
        if not 0 < self.max_steer < 90:
            raise ConfigError('max_steer must lie in (0, 90) deg', path='vehicle.max_steer')
        covered = sorted(w for m in self.modules for w in m.wheels)
        if covered != [0, 1, 2, 3]:
            raise ConfigError(f'modules must place every wheel exactly once, got {covered}',
                              path='vehicle.modules')
        ids = [m.module_id for m in self.modules]
        if len(set(ids)) != len(ids):
            raise ConfigError('module ids must be unique', path='vehicle.modules')
        kinds = {m.kind for m in self.modules}
        expected = {DriveConcept.AXLE_MODULE: {ModuleKind.AXLE_MODULE},
                    DriveConcept.WHEEL_MODULE: {ModuleKind.WHEEL_MODULE}}.get(self.concept)
        if expected is not None and kinds != expected:
            raise ConfigError(f'{self.concept.value} concept needs only {self.concept.value} modules',
                              path='vehicle.concept')
        for i, m in enumerate(self.modules):
            if m.kind is ModuleKind.AXLE_MODULE and sorted(m.wheels) not in ([0, 1], [2, 3]):
                raise ConfigError('an axle module must drive FL+FR or RL+RR', path=f'vehicle.modules[{i}].wheels')
            if (m.kind is ModuleKind.AXLE_MODULE and self.brake_position is BrakePosition.UPSTREAM
                    and not m.differential_lock):
                raise ConfigError('brakes upstream of the differential need a differential lock',
                                  path=f'vehicle.modules[{i}].differential_lock')
        mode_concept = (DriveConcept.WHEEL_MODULE if kinds == {ModuleKind.WHEEL_MODULE}
                        else DriveConcept.AXLE_MODULE)
        if not steering_mode_allowed(mode_concept, self.steering_mode):
            raise ConfigError(f'{self.steering_mode.value} steering needs wheel modules',
                              path='vehicle.steering_mode')

    @property
    def source_power(self) -> float:
        return self.dc_bus.max_source_power

    def module_for_wheel(self, wheel) -> int:
        idx = WHEELS.index(wheel) if isinstance(wheel, str) else int(wheel)
        for m in self.modules:
            if idx in m.wheels:
                return m.module_id
        raise KeyError(wheel)


@dataclass(frozen=True)
class TerrainSegment:
    start: float = 0.0               # m of travelled distance
    side_slope_deg: float = 0.0      # right side downhill when positive
    longitudinal_slope_deg: float = 0.0  # uphill when positive
    mu_scale: float = 1.0


@dataclass(frozen=True)
class Maneuver:
    at_time: float
    speed: Optional[float] = None        # km/h, speed loop
    torque: Optional[float] = None       # Nm per motor, torque loop
    turn_radius: Optional[float] = None  # m, inf for straight
    range: Optional[str] = None          # 'A' or 'B'
    command: Optional[str] = None        # enable, disable, park, free_wheel, reset
    modules: Optional[tuple] = None      # module ids; None addresses all


@dataclass(frozen=True)
class FaultSpec:
    at_time: float
    kind: FaultKind
    module_id: Optional[int] = None
    wheel: Optional[str] = None

    def resolve(self, config: VehicleConfig) -> FaultInjection:
        mid = self.module_id if self.module_id is not None else config.module_for_wheel(self.wheel)
        return FaultInjection(mid, self.at_time, self.kind)


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    dt: float = 1e-3
    terrain: tuple = (TerrainSegment(),)
    maneuvers: tuple = ()
    faults: tuple = ()
    seed: int = 0
    record_every: int = 1
    initial_speed: float = 0.0        # km/h
    auto_enable: bool = True
    mu_jitter: float = 0.0            # per-segment, per-wheel random mu scale spread
    efficiency_target: str = 'BernhardHarvester'
    limp_home: bool = False

    def __post_init__(self):
        if not 1e-4 <= self.dt <= 0.1:
            raise ConfigError('dt must lie in [1e-4, 0.1] s', path='scenario.dt')
        if not self.duration > 0:
            raise ConfigError('duration must be > 0', path='scenario.duration')
        if self.record_every < 1:
            raise ConfigError('record_every must be >= 1', path='scenario.record_every')
        if not self.terrain or self.terrain[0].start != 0:
            raise ConfigError('terrain must start at distance 0', path='scenario.terrain')
        starts = [t.start for t in self.terrain]
        if starts != sorted(starts):
            raise ConfigError('terrain segments must be ordered by start', path='scenario.terrain')
        for i, t in enumerate(self.terrain):
            if abs(t.side_slope_deg) >= 30 or abs(t.longitudinal_slope_deg) >= 30:
                raise ConfigError('slopes must stay below 30 deg', path=f'scenario.terrain[{i}]')
            if t.mu_scale <= 0:
                raise ConfigError('mu_scale must be > 0', path=f'scenario.terrain[{i}].mu_scale')
        for i, m in enumerate(self.maneuvers):
            if not 0 <= m.at_time <= self.duration:
                raise ConfigError('maneuver outside scenario duration', path=f'scenario.maneuvers[{i}].at_time')
        for i, f in enumerate(self.faults):
            if not 0 <= f.at_time <= self.duration:
                raise ConfigError('fault outside scenario duration', path=f'scenario.faults[{i}].at_time')
            if (f.module_id is None) == (f.wheel is None):
                raise ConfigError('a fault names exactly one of module_id or wheel', path=f'scenario.faults[{i}]')
        if self.efficiency_target not in ('BernhardHarvester', 'ReniusTractor'):
            raise ConfigError('efficiency_target must be BernhardHarvester or ReniusTractor',
                              path='scenario.efficiency_target')

    @property
    def ticks(self) -> int:
        return int(round(self.duration / self.dt))

    def target(self) -> EfficiencyTarget:
        if self.efficiency_target == TargetLabel.RENIUS_TRACTOR.value:
            return RENIUS_DEFAULT
        return bernhard_from_renius(RENIUS_DEFAULT)

    def final_speed_target(self) -> Optional[float]:
        speeds = [m.speed for m in sorted(self.maneuvers, key=lambda m: m.at_time) if m.speed is not None]
        return speeds[-1] if speeds else None


# trace schema

WHEEL_COLUMNS = ('steer', 'wheel_speed', 'wheel_torque', 'slip', 'normal_load', 'motor_speed',
                 'motor_torque', 'losses', 'state', 'range')
HEAD_COLUMNS = ('time', 'vehicle_speed', 'x', 'y', 'heading', 'yaw_rate')
TAIL_COLUMNS = ('bus_power', 'buffer', 'source_power', 'dump_power', 'unserved_power',
                'e_source', 'e_mech', 'e_losses', 'e_buffer', 'e_dump', 'e_unserved',
                'e_wheel_out', 'e_dc_in', 't_focus', 't_focus_met', 'ledger_residual', 'events')
TRACE_COLUMNS = (HEAD_COLUMNS + tuple(f'{w}_{c}' for w in WHEELS for c in WHEEL_COLUMNS) + TAIL_COLUMNS)
STRING_COLUMNS = frozenset([f'{w}_state' for w in WHEELS] + [f'{w}_range' for w in WHEELS] + ['events'])


@dataclass
class SimTrace:
    """Trace rows in the fixed column order of TRACE_COLUMNS.

    Per-wheel ``motor_speed``, ``motor_torque`` and ``losses`` belong to the
    wheel's module, so both wheels of an axle module show the same values.
    """
    rows: list = field(default_factory=list)
    columns: tuple = TRACE_COLUMNS

    def column(self, name: str):
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def array(self, name: str) -> np.ndarray:
        return np.array(self.column(name), dtype=float)

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([v if isinstance(v, str) else repr(v) for v in r])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, fh) -> 'SimTrace':
        reader = csv.reader(fh)
        columns = tuple(next(reader))
        if columns != TRACE_COLUMNS:
            raise ValueError('trace header does not match the fixed schema')
        is_str = [c in STRING_COLUMNS for c in columns]
        rows = [tuple(v if s else float(v) for v, s in zip(r, is_str)) for r in reader]
        return cls(rows, columns)


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    seed: int
    total_energy_wh: float
    driveline_efficiency: float
    target_fraction: Optional[float]
    peak_motor_torque: tuple          # per wheel column, Nm
    min_turning_radius: float
    final_speed_kmh: float
    target_reached: Optional[bool]
    max_ledger_residual: float
    fault_events: tuple

    KEYS = ('scenario', 'seed', 'total_energy_wh', 'driveline_efficiency', 'target_fraction',
            'peak_motor_torque', 'min_turning_radius', 'final_speed_kmh', 'target_reached',
            'max_ledger_residual', 'fault_events')

    def to_keyvalue(self) -> str:
        def fmt(v):
            if v is None:
                return 'n/a'
            if isinstance(v, bool):
                return 'true' if v else 'false'
            if isinstance(v, float):
                return repr(v)
            if isinstance(v, tuple):
                return ';'.join(fmt(x) for x in v)
            return str(v)
        return ''.join(f'{k}={fmt(getattr(self, k))}\n' for k in self.KEYS)

    @classmethod
    def from_keyvalue(cls, text: str) -> 'MetricsReport':
        kv = dict(line.split('=', 1) for line in text.splitlines() if line)

        def num(s):
            return None if s == 'n/a' else float(s)
        return cls(
            scenario=kv['scenario'], seed=int(kv['seed']),
            total_energy_wh=float(kv['total_energy_wh']),
            driveline_efficiency=float(kv['driveline_efficiency']),
            target_fraction=num(kv['target_fraction']),
            peak_motor_torque=tuple(float(x) for x in kv['peak_motor_torque'].split(';')),
            min_turning_radius=float(kv['min_turning_radius']),
            final_speed_kmh=float(kv['final_speed_kmh']),
            target_reached=None if kv['target_reached'] == 'n/a' else kv['target_reached'] == 'true',
            max_ledger_residual=float(kv['max_ledger_residual']),
            fault_events=tuple(x for x in kv['fault_events'].split(';') if x),
        )

    def to_text(self) -> str:
        tf = 'n/a' if self.target_fraction is None else f'{self.target_fraction:.3f}'
        reached = 'n/a' if self.target_reached is None else ('yes' if self.target_reached else 'no')
        peaks = ', '.join(f'{w} {t:.1f}' for w, t in zip(WHEELS, self.peak_motor_torque))
        lines = [
            f'scenario            {self.scenario}',
            f'seed                {self.seed}',
            f'total energy        {self.total_energy_wh:.2f} Wh',
            f'driveline eff.      {self.driveline_efficiency:.4f}',
            f'target met (focus)  {tf}',
            f'peak motor torque   {peaks} Nm',
            f'min turning radius  {self.min_turning_radius:.2f} m',
            f'final speed         {self.final_speed_kmh:.2f} km/h',
            f'target reached      {reached}',
            f'ledger residual     {self.max_ledger_residual:.2e}',
            f'fault events        {len(self.fault_events)}',
        ]
        lines += [f'  {e}' for e in self.fault_events]
        return '\n'.join(lines) + '\n'


def compute_metrics(trace: SimTrace, scenario: Scenario) -> MetricsReport:
    """Metrics from trace rows alone, so an exported trace reproduces them exactly."""
    if not trace.rows:
        raise ValueError('empty trace')
    col = {c: i for i, c in enumerate(trace.columns)}
    last = trace.rows[-1]
    e_in = last[col['e_dc_in']]
    eff = last[col['e_wheel_out']] / e_in if e_in > 0 else 0.0
    t_focus = last[col['t_focus']]
    frac = last[col['t_focus_met']] / t_focus if t_focus > 0 else None
    peaks = tuple(max(abs(r[col[f'{w}_motor_torque']]) for r in trace.rows) for w in WHEELS)
    radius = math.inf
    for r in trace.rows:
        v, yaw = r[col['vehicle_speed']], r[col['yaw_rate']]
        if abs(v) > 0.5 and abs(yaw) > 1e-9:
            radius = min(radius, abs(v / yaw))
    events = tuple(e for r in trace.rows for e in r[col['events']].split(';') if e)
    target = scenario.final_speed_target()
    reached = None
    if target is not None:
        t_end = last[col['time']]
        window = [r[col['vehicle_speed']] for r in trace.rows if r[col['time']] >= 0.8 * t_end]
        mean = math.fsum(window) / len(window)
        reached = bool(abs(target) > 0 and mean / (target * KMH) >= 0.95)
    return MetricsReport(
        scenario=scenario.name, seed=scenario.seed,
        total_energy_wh=last[col['e_source']] / 3600.0,
        driveline_efficiency=eff, target_fraction=frac, peak_motor_torque=peaks,
        min_turning_radius=radius, final_speed_kmh=last[col['vehicle_speed']] / KMH,
        target_reached=reached,
        max_ledger_residual=max(r[col['ledger_residual']] for r in trace.rows),
        fault_events=events,
    )


# world

class World:
    """Whole simulation state; plain data, deep-copyable between execution contexts."""

    def __init__(self, config: VehicleConfig, scenario: Scenario):
        self.config = config
        self.scenario = scenario
        self.tick = 0
        self.time = 0.0
        self.v = scenario.initial_speed * KMH
        self.x = self.y = self.heading = self.distance = 0.0
        self.yaw_rate = 0.0
        r = config.geometry.rolling_radius
        self.omega = [self.v / r] * 4
        self.modules = {m.module_id: copy.deepcopy(m) for m in sorted(config.modules, key=lambda m: m.module_id)}
        self.motor_speed = {mid: self._engaged_ratio(m) * self.v / r for mid, m in self.modules.items()}
        self.prev_range = {mid: m.range for mid, m in self.modules.items()}
        self.controller = CentralController()
        self.bus = FrameBus(config.bus_latency)
        self.buffer = config.dc_bus.buffer_state
        self.comms_cut: set = set()
        self.target_speed: Optional[float] = None
        self.maneuvers = sorted(scenario.maneuvers, key=lambda m: m.at_time)
        self.faults = sorted((f.resolve(config) for f in scenario.faults), key=lambda f: f.at_time)
        self.commanded_radius = math.inf
        self.eta_target = scenario.target()
        rng = np.random.default_rng(scenario.seed)
        self.mu_jitter = [tuple(1.0 + scenario.mu_jitter * float(u) for u in rng.uniform(-1, 1, 4))
                          for _ in scenario.terrain]
        self.energy = dict(source=0.0, mech=0.0, losses=0.0, buffer=0.0, dump=0.0, unserved=0.0,
                           wheel_out=0.0, dc_in=0.0, t_focus=0.0, t_focus_met=0.0)
        self.max_residual = 0.0
        self.pending_events: list = []
        self.overloaded: set = set()
        self.last = {}
        if scenario.auto_enable:
            self.controller.command('enable')

    @staticmethod
    def _engaged_ratio(m: DriveModule) -> float:
        state = m.range
        return m.rangebox.range_ratio(state) if state in (RangeState.RANGE_A, RangeState.RANGE_B) else 0.0

    # scenario inputs

    def _terrain_index(self) -> int:
        idx = 0
        for i, seg in enumerate(self.scenario.terrain):
            if self.distance >= seg.start:
                idx = i
        return idx

    def _apply_maneuver(self, mv: Maneuver):
        c = self.controller
        targets = mv.modules if mv.modules is not None else (None,)
        if mv.command is not None:
            for t in targets:
                c.command(mv.command, None, t)
            if mv.command in ('park', 'free_wheel', 'disable'):
                self.target_speed = None
        if mv.range is not None:
            for t in targets:
                c.command('range', mv.range, t)
        if mv.speed is not None:
            for t in targets:
                c.command('mode', ControlMode.SPEED_LOOP.value, t)
            self.target_speed = mv.speed * KMH
        if mv.torque is not None:
            for t in targets:
                c.command('mode', ControlMode.TORQUE_LOOP.value, t)
                c.command('setpoint', mv.torque, t)
            self.target_speed = None
        if mv.turn_radius is not None:
            self.commanded_radius = mv.turn_radius
            cfg = self.config
            angles = ackermann_angles(cfg.geometry, cfg.steering_mode, mv.turn_radius)
            for m in self.modules.values():
                steered = [a if self._steerable(w) else 0.0 for w, a in zip(range(4), angles)]
                c.command('steer', tuple(steered[w] for w in m.wheels), m.module_id)

    def _steerable(self, wheel: int) -> bool:
        return self.config.steering_mode is not SteeringMode.FRONT_ONLY or wheel in (0, 1)

    def _inject(self, f: FaultInjection):
        self.bus.fail(f.module_id, self.tick)
        self.comms_cut.add(f.module_id)
        if f.kind is FaultKind.TOTAL_LOSS:
            m = self.modules[f.module_id]
            m.dead = True
        self.pending_events.append(f'{self.tick}:m{f.module_id}:{f.kind.value}')

    def _wheel_setpoints(self):
        cfg = self.config
        geom = cfg.geometry
        angles = ackermann_angles(geom, cfg.steering_mode, self.commanded_radius)
        pos = wheel_positions(geom)
        icr, _ = estimate_icr(pos, angles)
        factors, _ = speed_factors(pos, angles, icr, (geom.wheelbase / 2, 0.0))
        r = geom.rolling_radius
        return {mid: math.fsum(factors[w] for w in m.wheels) / len(m.wheels) / r
                for mid, m in self.modules.items() if not m.dead}

    # one tick

    def advance(self, dt: float):
        cfg, sc = self.config, self.scenario
        geom, tire = cfg.geometry, cfg.tire
        self.tick += 1
        self.time = self.tick * dt

        while self.maneuvers and self.maneuvers[0].at_time <= self.time - dt / 2:
            self._apply_maneuver(self.maneuvers.pop(0))
        while self.faults and self.faults[0].at_time <= self.time - dt / 2:
            self._inject(self.faults.pop(0))

        delivered = self.bus.deliver(self.tick)
        to_modules = [f for f in delivered if f.sender == CONTROLLER_ID]

        outputs = {}
        for mid, m in self.modules.items():
            ws = math.fsum(self.omega[w] for w in m.wheels) / len(m.wheels)
            meas = Measurement(ws, self.motor_speed[mid])
            inbox = [] if mid in self.comms_cut else to_modules
            new, out, frames = module_step(m, inbox, meas, dt)
            if len(new.events) > len(m.events):
                self.pending_events.extend(new.events[len(m.events):])
            self.modules[mid] = new
            outputs[mid] = out
            self.bus.send(frames)
        self.bus.send(self.controller.step(self.v, self.target_speed, self._wheel_setpoints(), dt))

        # steering geometry from the actuated angles
        angles = [0.0] * 4
        for mid, m in self.modules.items():
            for w, a in zip(m.wheels, outputs[mid].steering):
                angles[w] = a
        pos = wheel_positions(geom)
        icr, _ = estimate_icr(pos, angles)
        kappa, yaw_per_v = speed_factors(pos, angles, icr, (geom.wheelbase / 2, 0.0))

        # loads
        ti = self._terrain_index()
        seg = sc.terrain[ti]
        side = math.radians(seg.side_slope_deg)
        slope = math.radians(seg.longitudinal_slope_deg)
        loads = wheel_load_distribution(cfg.mass, geom, side, slope)
        mu = [tire.mu_peak * seg.mu_scale * j for j in self.mu_jitter[ti]]

        # electrical demand and bus policy
        self._energised = {mid: o.energised for mid, o in outputs.items()}
        torque = {mid: (o.motor_torque if o.energised else 0.0) for mid, o in outputs.items()}
        demand, losses_by = self._dc_demand(torque)
        D = math.fsum(demand.values())
        bus = cfg.dc_bus
        cap = bus.max_source_power + self.buffer / dt
        unserved = 0.0
        if D > cap:
            torque, demand, losses_by = self._scale_motoring(torque, cap)
            D = math.fsum(demand.values())
            unserved = max(0.0, D - cap)
            self.pending_events.append(f'{self.tick}:bus:BusUnderrun({D - unserved:.0f}W of {D:.0f}W)')
        source = min(max(D, 0.0), bus.max_source_power)
        target_buffer = 0.5 * bus.buffer_capacity
        if self.buffer < target_buffer:
            source += min(bus.max_source_power - source, (target_buffer - self.buffer) / dt)
        raw = self.buffer + (source - D + unserved) * dt
        dump = max(0.0, raw - bus.buffer_capacity) / dt
        new_buffer = min(max(raw, 0.0), bus.buffer_capacity)

        # mechanical solve
        self._close_shifted_ranges()
        wheel_t, groups = self._groups(torque)
        v_new, omega_new, forces, slips = self._solve(groups, kappa, loads, mu, dt, slope)
        self._brake_checks(groups, forces)

        # state update
        for mid, m in self.modules.items():
            st = m.range
            if st in (RangeState.RANGE_A, RangeState.RANGE_B):
                ws = math.fsum(omega_new[w] for w in m.wheels) / len(m.wheels)
                self.motor_speed[mid] = m.ratio * ws
            elif st is RangeState.PARKED:
                self.motor_speed[mid] = 0.0
            elif m.motor.inertia > 0:
                self.motor_speed[mid] += dt * torque[mid] / m.motor.inertia
            self.prev_range[mid] = st
        self.omega = omega_new
        self.v = v_new
        self.yaw_rate = v_new * yaw_per_v
        self.heading += self.yaw_rate * dt
        self.x += v_new * math.cos(self.heading) * dt
        self.y += v_new * math.sin(self.heading) * dt
        self.distance += abs(v_new) * dt

        # energy ledger
        e = self.energy
        mech = math.fsum(torque[mid] * self._speed_for_power(mid) for mid in self.modules) * dt
        loss = math.fsum(losses_by.values()) * dt
        d_buffer = new_buffer - self.buffer
        e_src = source * dt
        residual = abs(e_src - (mech + loss + d_buffer + dump * dt - unserved * dt))
        scale = max(abs(e_src), abs(mech), abs(loss), abs(d_buffer), 1e-12)
        rel = residual / scale
        self.max_residual = max(self.max_residual, rel)
        self.buffer = new_buffer
        e['source'] += e_src
        e['mech'] += mech
        e['losses'] += loss
        e['buffer'] += d_buffer
        e['dump'] += dump * dt
        e['unserved'] += unserved * dt
        kmh = abs(v_new) / KMH
        focus = self.eta_target.focus_range
        for mid, m in self.modules.items():
            p_dc = demand[mid]
            if p_dc > 0:
                p_out = max(0.0, math.fsum(wheel_t[w] * omega_new[w] for w in m.wheels))
                e['dc_in'] += p_dc * dt
                e['wheel_out'] += p_out * dt
        motoring = [mid for mid in self.modules if demand[mid] > 0]
        if motoring and focus[0] <= kmh <= focus[1]:
            p_in = math.fsum(demand[mid] for mid in motoring)
            p_out = math.fsum(max(0.0, wheel_t[w] * omega_new[w]) for mid in motoring
                              for w in self.modules[mid].wheels)
            e['t_focus'] += dt
            if p_out / p_in >= target_eta(self.eta_target, kmh):
                e['t_focus_met'] += dt

        self.last = dict(angles=angles, wheel_t=wheel_t, slips=slips, loads=loads, torque=torque,
                         losses=losses_by, D=D, source=source, dump=dump, unserved=unserved, rel=rel)

    def chassis_step(self, wheel_torques, dt: float):
        """Advance the mechanics only, with torques applied directly at the four wheels."""
        geom = self.config.geometry
        seg = self.scenario.terrain[self._terrain_index()]
        slope = math.radians(seg.longitudinal_slope_deg)
        loads = wheel_load_distribution(self.config.mass, geom, math.radians(seg.side_slope_deg), slope)
        mu = [self.config.tire.mu_peak * seg.mu_scale] * 4
        J_w = self.config.tire.wheel_inertia
        groups = [((i,), J_w, float(wheel_torques[i]), False) for i in range(4)]
        kappa = (1.0,) * 4
        self.v, self.omega, forces, slips = self._solve(groups, kappa, loads, mu, dt, slope)
        self.tick += 1
        self.time = self.tick * dt
        self.x += self.v * dt
        self.distance += abs(self.v) * dt
        return forces, slips

    def _speed_for_power(self, mid: int) -> float:
        return self._power_speed[mid]

    def _dc_demand(self, torque):
        demand, losses = {}, {}
        self._power_speed = {}
        for mid, m in self.modules.items():
            w = self.motor_speed[mid]
            self._power_speed[mid] = w
            if not self._energised[mid]:
                demand[mid] = 0.0
                losses[mid] = 0.0
                continue
            ml, il = motor_losses(m.motor, torque[mid], w)
            losses[mid] = ml + il
            demand[mid] = torque[mid] * w + ml + il
        return demand, losses

    def _scale_motoring(self, torque, cap):
        lo, hi = 0.0, 1.0
        for _ in range(40):
            mid_s = 0.5 * (lo + hi)
            t = {k: (v * mid_s if v * self.motor_speed[k] > 0 else v) for k, v in torque.items()}
            d, _ = self._dc_demand(t)
            if math.fsum(d.values()) > cap:
                hi = mid_s
            else:
                lo = mid_s
        t = {k: (v * lo if v * self.motor_speed[k] > 0 else v) for k, v in torque.items()}
        d, l = self._dc_demand(t)
        return t, d, l

    def _close_shifted_ranges(self):
        # a closing range brake makes motor and wheel share one speed; momentum is conserved
        J_w = self.config.tire.wheel_inertia
        for mid, m in self.modules.items():
            st = m.range
            if self.prev_range[mid] is RangeState.FREE_WHEEL and st in (RangeState.RANGE_A, RangeState.RANGE_B):
                n = len(m.wheels)
                ratio = m.ratio
                ws = math.fsum(self.omega[w] for w in m.wheels) / n
                J_m = m.motor.inertia
                merged = (n * J_w * ws + J_m * ratio * self.motor_speed[mid]) / (n * J_w + J_m * ratio * ratio)
                for w in m.wheels:
                    self.omega[w] += merged - ws
                self.motor_speed[mid] = ratio * merged

    def _groups(self, torque):
        """Wheel groups sharing a speed: (wheels, inertia, torque, fixed)."""
        J_w = self.config.tire.wheel_inertia
        wheel_t = [0.0] * 4
        groups = []
        for mid, m in self.modules.items():
            st = m.range
            if st is RangeState.PARKED:
                groups.extend(((w,), 0.0, 0.0, True) for w in m.wheels)
                continue
            if st is RangeState.FREE_WHEEL:
                groups.extend(((w,), J_w, 0.0, False) for w in m.wheels)
                continue
            ratio = m.ratio
            t = wheel_torque(m.rangebox, torque[mid], self.motor_speed[mid])
            J_m = m.motor.inertia * ratio * ratio
            if m.kind is ModuleKind.WHEEL_MODULE or not m.differential_lock:
                n = len(m.wheels)
                for w in m.wheels:
                    wheel_t[w] = t / n
                    groups.append(((w,), J_w + J_m / n, t / n, False))
            else:
                for w in m.wheels:
                    wheel_t[w] = t / 2
                groups.append((tuple(m.wheels), 2 * J_w + J_m, t, False))
        return wheel_t, groups

    def _solve(self, groups, kappa, loads, mu, dt, slope):
        cfg = self.config
        tire = cfg.tire
        r = cfg.geometry.rolling_radius
        m_v = cfg.mass
        v = self.v
        grade = m_v * G * math.sin(slope)
        f_roll = tire.rolling_resistance * m_v * G * math.cos(slope)
        cap = [mu[i] * loads[i] for i in range(4)]
        den = [max(abs(kappa[i] * v), tire.slip_speed_floor) for i in range(4)]
        k = [cap[i] / (tire.slip_at_peak * den[i]) for i in range(4)]
        omega_new = list(self.omega)
        forces = [0.0] * 4

        if all(g[3] for g in groups):
            # every wheel held by its brake: Coulomb friction on the whole vehicle
            X = m_v * v / dt - grade
            grip = math.fsum(cap[i] * abs(kappa[i]) for i in range(4))
            C = f_roll + grip
            if abs(X) <= C:
                v_new = 0.0
                held = X - max(-f_roll, min(f_roll, X))
            else:
                v_new = (X - math.copysign(C, X)) / (m_v / dt)
                held = math.copysign(grip, X)
            total_cap = math.fsum(cap) or 1.0
            forces = [-held * cap[i] / total_cap for i in range(4)]
            slips = [0.0 if v_new == 0 else -math.copysign(1.0, kappa[i] * v_new) for i in range(4)]
            return v_new, [0.0] * 4, forces, slips

        sat = [0.0] * 4
        for _ in range(6):
            M = m_v / dt
            num = m_v * v / dt - grade
            parts = []
            for wheels, J, T, fixed in groups:
                lin = [i for i in wheels if sat[i] == 0.0]
                fsat = math.fsum(sat[i] * cap[i] for i in wheels)
                num += math.fsum(kappa[i] * sat[i] * cap[i] for i in wheels)
                S1 = math.fsum(k[i] * kappa[i] for i in lin)
                S2 = math.fsum(k[i] * kappa[i] ** 2 for i in lin)
                if fixed:
                    M += S2
                    parts.append(None)
                    continue
                Dg = J / dt + r * r * math.fsum(k[i] for i in lin)
                A = J * self.omega[wheels[0]] / dt + T - r * fsat
                M += S2 - r * r * S1 * S1 / Dg
                num += r * S1 * A / Dg
                parts.append((Dg, A, S1))
            if num > f_roll:
                v_new = (num - f_roll) / M
            elif num < -f_roll:
                v_new = (num + f_roll) / M
            else:
                v_new = 0.0
            changed = False
            for (wheels, J, T, fixed), part in zip(groups, parts):
                w_new = 0.0 if fixed else (part[1] + r * part[2] * v_new) / part[0]
                for i in wheels:
                    omega_new[i] = w_new
                    if sat[i] != 0.0:
                        forces[i] = sat[i] * cap[i]
                        continue
                    f = k[i] * (r * w_new - kappa[i] * v_new)
                    forces[i] = f
                    if abs(f) > cap[i]:
                        sat[i] = math.copysign(1.0, f)
                        changed = True
            if not changed:
                break
        slips = [(r * omega_new[i] - kappa[i] * v_new) / max(abs(kappa[i] * v_new), tire.slip_speed_floor)
                 for i in range(4)]
        return v_new, omega_new, forces, slips

    def _brake_checks(self, groups, forces):
        r = self.config.geometry.rolling_radius
        for mid, m in self.modules.items():
            if m.range is not RangeState.PARKED:
                self.overloaded.discard(mid)
                continue
            ground = math.fsum(forces[w] for w in m.wheels) * r
            try:
                park_reaction(m.rangebox, ground, 0.0)
                self.overloaded.discard(mid)
            except BrakeOverload as exc:
                if mid not in self.overloaded:
                    self.pending_events.append(f'{self.tick}:m{mid}:BrakeOverload({exc})')
                self.overloaded.add(mid)

    def row(self):
        last = self.last
        row = [self.time, self.v, self.x, self.y, self.heading, self.yaw_rate]
        mod_of = {}
        for mid, m in self.modules.items():
            for w in m.wheels:
                mod_of[w] = m
        for w in range(4):
            m = mod_of[w]
            mid = m.module_id
            row += [last['angles'][w], self.omega[w], last['wheel_t'][w], last['slips'][w], last['loads'][w],
                    self.motor_speed[mid], last['torque'][mid], last['losses'][mid], m.state.value, m.range.value]
        e = self.energy
        row += [last['D'], self.buffer, last['source'], last['dump'], last['unserved'],
                e['source'], e['mech'], e['losses'], e['buffer'], e['dump'], e['unserved'],
                e['wheel_out'], e['dc_in'], e['t_focus'], e['t_focus_met'], last['rel'],
                ';'.join(self.pending_events)]
        self.pending_events = []
        return tuple(float(x) if isinstance(x, (int, float)) and not isinstance(x, bool) else x for x in row)


def step(world: World, dt: float) -> World:
    """Pure one-tick step: returns an advanced copy and leaves ``world`` untouched."""
    nxt = copy.deepcopy(world)
    nxt.advance(dt)
    return nxt


def run_world(config: VehicleConfig, scenario: Scenario, strict_ledger: bool = True):
    """Run a scenario to completion and return ``(final world, trace)``.

    With ``strict_ledger`` an energy-ledger residual above 1e-6 raises
    AssertionError, since that would mean the accounting itself is broken.
    """
    world = World(config, scenario)
    trace = SimTrace()
    dt = scenario.dt
    for _ in range(scenario.ticks):
        world.advance(dt)
        if strict_ledger and world.last['rel'] > LEDGER_TOLERANCE:
            raise AssertionError(f'energy ledger open by {world.last["rel"]:.3e} at tick {world.tick}')
        if world.tick % scenario.record_every == 0:
            trace.rows.append(world.row())
    if world.pending_events and trace.rows:
        # events after the last recorded row are attached to it
        last = list(trace.rows[-1])
        extra = ';'.join(world.pending_events)
        last[-1] = f'{last[-1]};{extra}' if last[-1] else extra
        trace.rows[-1] = tuple(last)
        world.pending_events = []
    return world, trace


def run_scenario(config: VehicleConfig, scenario: Scenario):
    """Run a scenario and return ``(trace, metrics)``; deterministic for a fixed seed."""
    _, trace = run_world(config, scenario)
    return trace, compute_metrics(trace, scenario)


def limp_home_for(config: VehicleConfig, scenario: Scenario):
    """The quasi-static limp-home verdict matching a scenario's faults, terrain and final target."""
    failed = {f.resolve(config).module_id for f in scenario.faults}
    seg = scenario.terrain[-1]
    target = scenario.final_speed_target() or 0.0
    ls = LimpHomeScenario(math.radians(seg.longitudinal_slope_deg), abs(target), math.radians(seg.side_slope_deg))
    return limp_home_check(config, failed, ls)
