"""Strict YAML configuration for vehicles and scenarios.

Unknown keys and wrongly typed values are rejected with the dotted path
and source line of the offending field. ``serialize`` writes a fully
explicit file that parses back to an equal object graph.

Schema (all lengths m, masses kg, powers W, speeds rad/s unless noted)::

    vehicle:
      name, concept (axle|wheel|mixed), mass
      geometry: wheelbase, track_width, rolling_radius, cog_height, cog_longitudinal_offset
      tire: mu_peak, slip_at_peak, rolling_resistance, wheel_inertia, slip_speed_floor
      dc_bus: buffer_capacity, buffer_state, voltage_class, max_source_power
      steering_mode, max_steer (deg), brake_position (wheel|upstream), bus_latency (ticks)
      motor, rangebox, controller, telemetry_period: defaults for every module
      modules: list of {id, wheels: [FL|FR|RL|RR], kind?, differential_lock?,
                        motor?, rangebox?, controller?, telemetry_period?}
    hydrostatic: rated_torque, rated_speed, const_loss, speed_loss, torque_loss, power_loss
    scenario:
      name, duration (s), dt (s), seed, record_every, initial_speed (km/h),
      auto_enable, mu_jitter, efficiency_target, limp_home
      terrain: list of {start, side_slope_deg, longitudinal_slope_deg, mu_scale}
      maneuvers: list of {at, speed (km/h), torque (Nm), turn_radius, range, command, modules}
      faults: list of {at, kind (total_loss|comms_loss), module | wheel}

``motor`` takes continuous_power, peak_power, base_speed or base_speed_rpm,
max_speed or max_speed_rpm, nominal_speed (rpm), inertia, overload_budget
and losses {copper_coeff, iron_coeff, inverter_fixed, inverter_prop}.
``rangebox`` takes stage1, range_a and range_b as {sun, ring, planets,
mesh_efficiency, arrangement}, plus brake_torque_limit.
"""
from __future__ import annotations

import os
from dataclasses import fields
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError
from .kinematics import WHEELS, DriveConcept, SteeringMode, VehicleGeometry
from .modctrl import (ControllerParams, DriveModule, FaultKind, FreeWheelMethod, ModuleKind, PIGains)
from .powertrain import RPM, DcBus, HydrostaticBaseline, LossParams, MotorSpec
from .simulator import (BrakePosition, FaultSpec, Maneuver, Scenario, TerrainSegment, TireSpec, VehicleConfig)
from .transmission import Arrangement, PlanetaryStage, RangeBox

ENV_PATH = 'AGDRIVE_CONFIG_PATH'
DATA_DIR = Path(__file__).parent / 'data'


# source positions

def _lines(node, path, out):
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            sub = f'{path}.{key}' if path else key
            out[sub] = k.start_mark.line + 1
            _lines(v, sub, out)
            out[sub] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _lines(v, f'{path}[{i}]', out)


class _Doc:
    """Parsed YAML plus a dotted-path to line map for diagnostics."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            self.data = yaml.safe_load(text)
            node = yaml.compose(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, 'problem_mark', None)
            raise ConfigError(f'YAML syntax error: {getattr(exc, "problem", exc)}', path=source,
                              line=mark.line + 1 if mark else None) from None
        self.lines = {}
        if node is not None:
            _lines(node, '', self.lines)


class _Reader:
    def __init__(self, doc: _Doc):
        self.doc = doc

    def fail(self, path, msg):
        line = None
        p = path
        while p:
            if p in self.doc.lines:
                line = self.doc.lines[p]
                break
            p = p[:max(p.rfind('.'), p.rfind('['), 0)]
        return ConfigError(msg, path=path, line=line)

    def mapping(self, value, path, allowed, required=()):
        if not isinstance(value, dict):
            raise self.fail(path, 'expected a mapping')
        for k in value:
            if k not in allowed:
                raise self.fail(f'{path}.{k}', f'unknown key {k!r}')
        for k in required:
            if k not in value:
                raise self.fail(path, f'missing required key {k!r}')
        return value

    def number(self, m, key, path, default=None, integer=False):
        if key not in m:
            if default is None:
                raise self.fail(path, f'missing required key {key!r}')
            return default
        v = m[key]
        p = f'{path}.{key}'
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.fail(p, f'expected a number, got {v!r}')
        if integer:
            if isinstance(v, float) and not v.is_integer():
                raise self.fail(p, f'expected an integer, got {v!r}')
            return int(v)
        return float(v)

    def string(self, m, key, path, default=None, choices=None):
        if key not in m:
            if default is None:
                raise self.fail(path, f'missing required key {key!r}')
            return default
        v = m[key]
        if not isinstance(v, str):
            raise self.fail(f'{path}.{key}', f'expected a string, got {v!r}')
        if choices is not None and v not in choices:
            raise self.fail(f'{path}.{key}', f'expected one of {sorted(choices)}, got {v!r}')
        return v

    def boolean(self, m, key, path, default):
        if key not in m:
            return default
        v = m[key]
        if not isinstance(v, bool):
            raise self.fail(f'{path}.{key}', f'expected true or false, got {v!r}')
        return v

    def sequence(self, m, key, path):
        v = m.get(key, [])
        if not isinstance(v, list):
            raise self.fail(f'{path}.{key}', 'expected a list')
        return v

    def build(self, path, ctor, *args, **kw):
        try:
            return ctor(*args, **kw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise self.fail(path, str(exc)) from None


# vehicle

GEOMETRY_KEYS = tuple(f.name for f in fields(VehicleGeometry))
TIRE_KEYS = tuple(f.name for f in fields(TireSpec))
BUS_KEYS = tuple(f.name for f in fields(DcBus))
LOSS_KEYS = tuple(f.name for f in fields(LossParams))
MOTOR_KEYS = ('continuous_power', 'peak_power', 'base_speed', 'base_speed_rpm', 'max_speed', 'max_speed_rpm',
              'nominal_speed', 'inertia', 'overload_budget', 'losses')
STAGE_KEYS = ('sun', 'ring', 'planets', 'mesh_efficiency', 'arrangement')
BOX_KEYS = ('stage1', 'range_a', 'range_b', 'brake_torque_limit')
CTRL_KEYS = ('kp', 'ki', 'timeout_periods', 'park_threshold', 'free_wheel_method', 'free_wheel_torque',
             'shift_ramp_ticks', 'sync_time_constant', 'sync_tolerance', 'shift_speed_window', 'brake_ramp')
MODULE_KEYS = ('id', 'wheels', 'kind', 'differential_lock', 'motor', 'rangebox', 'controller', 'telemetry_period')
VEHICLE_KEYS = ('name', 'concept', 'mass', 'geometry', 'tire', 'dc_bus', 'steering_mode', 'max_steer',
                'brake_position', 'bus_latency', 'motor', 'rangebox', 'controller', 'telemetry_period', 'modules')


def _plain(rd, m, path, keys, ctor):
    rd.mapping(m, path, keys)
    defaults = {f.name: f.default for f in fields(ctor)}
    kw = {}
    for k in keys:
        if k in m:
            kw[k] = rd.number(m, k, path)
        elif defaults.get(k) is None or not isinstance(defaults[k], (int, float)):
            raise rd.fail(path, f'missing required key {k!r}')
    return rd.build(path, ctor, **kw)


def _speed(rd, m, key, path):
    if key in m and f'{key}_rpm' in m:
        raise rd.fail(f'{path}.{key}', f'give either {key} or {key}_rpm, not both')
    if f'{key}_rpm' in m:
        return rd.number(m, f'{key}_rpm', path) * RPM
    return rd.number(m, key, path)


def _motor(rd, m, path):
    rd.mapping(m, path, MOTOR_KEYS)
    kw = dict(continuous_power=rd.number(m, 'continuous_power', path),
              peak_power=rd.number(m, 'peak_power', path),
              base_speed=_speed(rd, m, 'base_speed', path),
              max_speed=_speed(rd, m, 'max_speed', path))
    for k in ('nominal_speed', 'inertia', 'overload_budget'):
        if k in m:
            kw[k] = rd.number(m, k, path)
    if 'losses' in m:
        kw['loss_params'] = _plain(rd, m['losses'], f'{path}.losses', LOSS_KEYS, LossParams)
    return rd.build(path, MotorSpec, **kw)


def _stage(rd, m, path):
    rd.mapping(m, path, STAGE_KEYS, required=('sun', 'ring'))
    kw = dict(sun_teeth=rd.number(m, 'sun', path, integer=True),
              ring_teeth=rd.number(m, 'ring', path, integer=True),
              planet_count=rd.number(m, 'planets', path, default=3, integer=True))
    if 'mesh_efficiency' in m:
        kw['mesh_efficiency'] = rd.number(m, 'mesh_efficiency', path)
    if 'arrangement' in m:
        kw['arrangement'] = Arrangement(rd.string(m, 'arrangement', path,
                                                  choices={a.value for a in Arrangement}))
    return rd.build(path, PlanetaryStage, **kw)


def _rangebox(rd, m, path):
    rd.mapping(m, path, BOX_KEYS, required=('range_a', 'range_b'))
    stage1 = _stage(rd, m['stage1'], f'{path}.stage1') if m.get('stage1') is not None else None
    kw = {}
    if 'brake_torque_limit' in m:
        kw['brake_torque_limit'] = rd.number(m, 'brake_torque_limit', path)
    return rd.build(path, RangeBox, stage1, _stage(rd, m['range_a'], f'{path}.range_a'),
                    _stage(rd, m['range_b'], f'{path}.range_b'), **kw)


def _controller(rd, m, path):
    rd.mapping(m, path, CTRL_KEYS)
    base = ControllerParams()
    gains = PIGains(rd.number(m, 'kp', path, base.gains.kp), rd.number(m, 'ki', path, base.gains.ki))
    kw = {'gains': gains}
    for k in ('timeout_periods', 'shift_ramp_ticks'):
        kw[k] = rd.number(m, k, path, getattr(base, k), integer=True)
    for k in ('park_threshold', 'free_wheel_torque', 'sync_time_constant', 'sync_tolerance',
              'shift_speed_window', 'brake_ramp'):
        kw[k] = rd.number(m, k, path, getattr(base, k))
    kw['free_wheel_method'] = FreeWheelMethod(rd.string(m, 'free_wheel_method', path, base.free_wheel_method.value,
                                                        {x.value for x in FreeWheelMethod}))
    return rd.build(path, ControllerParams, **kw)


def _wheel_index(rd, name, path):
    if name not in WHEELS:
        raise rd.fail(path, f'unknown wheel {name!r}, expected one of {list(WHEELS)}')
    return WHEELS.index(name)


def _vehicle(rd, m, path='vehicle'):
    rd.mapping(m, path, VEHICLE_KEYS, required=('concept', 'mass', 'geometry', 'modules'))
    concept = DriveConcept(rd.string(m, 'concept', path, choices={c.value for c in DriveConcept}))
    mass = rd.number(m, 'mass', path)
    if not mass > 0:
        raise rd.fail(f'{path}.mass', 'mass must be > 0')
    geom = _plain(rd, m['geometry'], f'{path}.geometry', GEOMETRY_KEYS, VehicleGeometry)
    tire = _plain(rd, m['tire'], f'{path}.tire', TIRE_KEYS, TireSpec) if 'tire' in m else TireSpec()
    bus = _plain(rd, m['dc_bus'], f'{path}.dc_bus', BUS_KEYS, DcBus) if 'dc_bus' in m else DcBus()
    motor = _motor(rd, m['motor'], f'{path}.motor') if 'motor' in m else None
    box = _rangebox(rd, m['rangebox'], f'{path}.rangebox') if 'rangebox' in m else None
    ctrl = _controller(rd, m['controller'], f'{path}.controller') if 'controller' in m else ControllerParams()
    period = rd.number(m, 'telemetry_period', path, 10, integer=True)
    modules = []
    for i, mm in enumerate(rd.sequence(m, 'modules', path)):
        p = f'{path}.modules[{i}]'
        rd.mapping(mm, p, MODULE_KEYS, required=('id', 'wheels'))
        wheels = mm['wheels']
        if not isinstance(wheels, list) or not wheels:
            raise rd.fail(f'{p}.wheels', 'expected a non-empty list of wheel names')
        idx = tuple(_wheel_index(rd, w, f'{p}.wheels') for w in wheels)
        default_kind = ModuleKind.AXLE_MODULE if len(idx) == 2 else ModuleKind.WHEEL_MODULE
        kind = ModuleKind(rd.string(mm, 'kind', p, default_kind.value, {k.value for k in ModuleKind}))
        mo = _motor(rd, mm['motor'], f'{p}.motor') if 'motor' in mm else motor
        bx = _rangebox(rd, mm['rangebox'], f'{p}.rangebox') if 'rangebox' in mm else box
        if mo is None:
            raise rd.fail(p, 'no motor given for this module or at vehicle level')
        if bx is None:
            raise rd.fail(p, 'no rangebox given for this module or at vehicle level')
        ct = _controller(rd, mm['controller'], f'{p}.controller') if 'controller' in mm else ctrl
        modules.append(rd.build(p, DriveModule, rd.number(mm, 'id', p, integer=True), kind, idx, mo, bx,
                                params=ct, differential_lock=rd.boolean(mm, 'differential_lock', p, False),
                                telemetry_period=rd.number(mm, 'telemetry_period', p, period, integer=True)))
    return rd.build(path, VehicleConfig, geom, mass, concept, tuple(modules), tire=tire, dc_bus=bus,
                    steering_mode=SteeringMode(rd.string(m, 'steering_mode', path, 'front_only',
                                                         {s.value for s in SteeringMode})),
                    max_steer=rd.number(m, 'max_steer', path, 35.0),
                    brake_position=BrakePosition(rd.string(m, 'brake_position', path, 'wheel',
                                                           {b.value for b in BrakePosition})),
                    bus_latency=rd.number(m, 'bus_latency', path, 1, integer=True),
                    name=rd.string(m, 'name', path, ''))


# scenario

SCENARIO_KEYS = ('name', 'duration', 'dt', 'seed', 'record_every', 'initial_speed', 'auto_enable', 'mu_jitter',
                 'efficiency_target', 'limp_home', 'terrain', 'maneuvers', 'faults')
TERRAIN_KEYS = ('start', 'side_slope_deg', 'longitudinal_slope_deg', 'mu_scale')
MANEUVER_KEYS = ('at', 'speed', 'torque', 'turn_radius', 'range', 'command', 'modules')
FAULT_KEYS = ('at', 'kind', 'module', 'wheel')


def _scenario(rd, m, path='scenario'):
    rd.mapping(m, path, SCENARIO_KEYS, required=('name', 'duration'))
    terrain = []
    for i, t in enumerate(rd.sequence(m, 'terrain', path)):
        p = f'{path}.terrain[{i}]'
        rd.mapping(t, p, TERRAIN_KEYS)
        terrain.append(TerrainSegment(rd.number(t, 'start', p, 0.0), rd.number(t, 'side_slope_deg', p, 0.0),
                                      rd.number(t, 'longitudinal_slope_deg', p, 0.0),
                                      rd.number(t, 'mu_scale', p, 1.0)))
    maneuvers = []
    for i, mv in enumerate(rd.sequence(m, 'maneuvers', path)):
        p = f'{path}.maneuvers[{i}]'
        rd.mapping(mv, p, MANEUVER_KEYS, required=('at',))
        opt = {k: (rd.number(mv, k, p) if k in mv else None) for k in ('speed', 'torque', 'turn_radius')}
        mods = mv.get('modules')
        if mods is not None:
            if not isinstance(mods, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in mods):
                raise rd.fail(f'{p}.modules', 'expected a list of module ids')
            mods = tuple(mods)
        rng = rd.string(mv, 'range', p, '', {'A', 'B'}) if 'range' in mv else None
        cmd = rd.string(mv, 'command', p, '', {'enable', 'disable', 'park', 'free_wheel', 'reset'}) \
            if 'command' in mv else None
        maneuvers.append(Maneuver(rd.number(mv, 'at', p), opt['speed'], opt['torque'], opt['turn_radius'],
                                  rng, cmd, mods))
    faults = []
    for i, f in enumerate(rd.sequence(m, 'faults', path)):
        p = f'{path}.faults[{i}]'
        rd.mapping(f, p, FAULT_KEYS, required=('at', 'kind'))
        kind = FaultKind(rd.string(f, 'kind', p, choices={k.value for k in FaultKind}))
        mid = rd.number(f, 'module', p, integer=True) if 'module' in f else None
        wheel = rd.string(f, 'wheel', p, choices=set(WHEELS)) if 'wheel' in f else None
        faults.append(FaultSpec(rd.number(f, 'at', p), kind, mid, wheel))
    kw = dict(terrain=tuple(terrain) or (TerrainSegment(),), maneuvers=tuple(maneuvers), faults=tuple(faults),
              seed=rd.number(m, 'seed', path, 0, integer=True),
              record_every=rd.number(m, 'record_every', path, 1, integer=True),
              initial_speed=rd.number(m, 'initial_speed', path, 0.0),
              auto_enable=rd.boolean(m, 'auto_enable', path, True),
              mu_jitter=rd.number(m, 'mu_jitter', path, 0.0),
              efficiency_target=rd.string(m, 'efficiency_target', path, 'BernhardHarvester'),
              limp_home=rd.boolean(m, 'limp_home', path, False))
    if 'dt' in m:
        kw['dt'] = rd.number(m, 'dt', path)
    return rd.build(path, Scenario, rd.string(m, 'name', path), rd.number(m, 'duration', path), **kw)


# files and search path

TOP_KEYS = ('vehicle', 'scenario', 'hydrostatic')
HYDRO_KEYS = tuple(f.name for f in fields(HydrostaticBaseline))


def search_dirs() -> list[Path]:
    dirs = [Path(p) for p in os.environ.get(ENV_PATH, '').split(os.pathsep) if p]
    return dirs + [DATA_DIR, DATA_DIR / 'vehicles', DATA_DIR / 'scenarios']


def resolve(name, base: Optional[Path] = None) -> Path:
    """Find a config file by path, then relative to ``base``, then on the search path."""
    p = Path(name)
    candidates = [p]
    if base is not None and not p.is_absolute():
        candidates.append(base / p)
    if not p.is_absolute():
        for d in search_dirs():
            candidates += [d / p, d / f'{p}.yaml']
    for c in candidates:
        if c.is_file():
            return c
    raise FileNotFoundError(f'config {name!s} not found (searched {ENV_PATH} and shipped data)')


def _read(path: Path) -> _Reader:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f'cannot read config: {exc.strerror}', path=str(path)) from None
    return _Reader(_Doc(text, str(path)))


def _section(rd: _Reader, key: str, src: Path, builder):
    data = rd.doc.data
    value = data[key]
    if isinstance(value, str):
        sub = _read(resolve(value, src.parent))
        rd2 = sub
        d2 = sub.doc.data
        if not isinstance(d2, dict) or key not in d2:
            raise ConfigError(f'{value} has no top-level {key!r}', path=str(value))
        rd2.mapping(d2, '', (key,))
        return _wrap(lambda: builder(rd2, d2[key]), sub.doc.source)
    return _wrap(lambda: builder(rd, value), rd.doc.source)


def _wrap(fn, source):
    try:
        return fn()
    except ConfigError as exc:
        if exc.source is None:
            exc.source = source
        raise


def parse_config(path, require_scenario: bool = True):
    """Parse a config file into ``(VehicleConfig, Scenario)``.

    ``vehicle`` and ``scenario`` sections may be inline mappings or names of
    other config files, resolved next to this file and on the search path.
    """
    path = resolve(path)
    rd = _read(path)
    data = rd.doc.data
    if not isinstance(data, dict):
        raise ConfigError('top level must be a mapping', path=str(path))
    rd.mapping(data, '', TOP_KEYS, required=('vehicle',) + (('scenario',) if require_scenario else ()))
    vehicle = _section(rd, 'vehicle', path, _vehicle)
    scenario = _section(rd, 'scenario', path, _scenario) if 'scenario' in data else None
    return vehicle, scenario


def parse_baseline(path) -> HydrostaticBaseline:
    """The optional top-level ``hydrostatic`` section of a config file; defaults if absent."""
    path = resolve(path)
    rd = _read(path)
    data = rd.doc.data
    if not isinstance(data, dict):
        raise ConfigError('top level must be a mapping', path=str(path))
    rd.mapping(data, '', TOP_KEYS)
    if 'hydrostatic' not in data:
        return HydrostaticBaseline()
    return _wrap(lambda: _plain(rd, data['hydrostatic'], 'hydrostatic', HYDRO_KEYS, HydrostaticBaseline),
                 rd.doc.source)


def parse_vehicle(path) -> VehicleConfig:
    return parse_config(path, require_scenario=False)[0]


def parse_scenario(path) -> Scenario:
    path = resolve(path)
    rd = _read(path)
    data = rd.doc.data
    if not isinstance(data, dict):
        raise ConfigError('top level must be a mapping', path=str(path))
    rd.mapping(data, '', ('scenario', 'hydrostatic'), required=('scenario',))
    return _section(rd, 'scenario', path, _scenario)


def parse_text(text: str, source: str = '<string>'):
    rd = _Reader(_Doc(text, source))
    data = rd.doc.data
    if not isinstance(data, dict):
        raise ConfigError('top level must be a mapping', path=source)
    rd.mapping(data, '', TOP_KEYS, required=('vehicle',))
    vehicle = _wrap(lambda: _vehicle(rd, data['vehicle']), source)
    scenario = _wrap(lambda: _scenario(rd, data['scenario']), source) if 'scenario' in data else None
    return vehicle, scenario


# serialization

def _stage_dict(s: PlanetaryStage):
    return dict(sun=s.sun_teeth, ring=s.ring_teeth, planets=s.planet_count, mesh_efficiency=s.mesh_efficiency,
                arrangement=s.arrangement.value)


def _motor_dict(mo: MotorSpec):
    return dict(continuous_power=mo.continuous_power, peak_power=mo.peak_power, base_speed=mo.base_speed,
                max_speed=mo.max_speed, nominal_speed=mo.nominal_speed, inertia=mo.inertia,
                overload_budget=mo.overload_budget,
                losses={k: getattr(mo.loss_params, k) for k in LOSS_KEYS})


def _box_dict(b: RangeBox):
    return dict(stage1=_stage_dict(b.stage1) if b.stage1 is not None else None,
                range_a=_stage_dict(b.stage2_range_a), range_b=_stage_dict(b.stage2_range_b),
                brake_torque_limit=b.brake_torque_limit)


def _ctrl_dict(c: ControllerParams):
    d = dict(kp=c.gains.kp, ki=c.gains.ki)
    for k in CTRL_KEYS[2:]:
        v = getattr(c, k)
        d[k] = v.value if isinstance(v, FreeWheelMethod) else v
    return d


def vehicle_dict(v: VehicleConfig) -> dict:
    return dict(
        name=v.name, concept=v.concept.value, mass=v.mass,
        geometry={k: getattr(v.geometry, k) for k in GEOMETRY_KEYS},
        tire={k: getattr(v.tire, k) for k in TIRE_KEYS},
        dc_bus={k: getattr(v.dc_bus, k) for k in BUS_KEYS},
        steering_mode=v.steering_mode.value, max_steer=v.max_steer, brake_position=v.brake_position.value,
        bus_latency=v.bus_latency,
        modules=[dict(id=m.module_id, wheels=[WHEELS[w] for w in m.wheels], kind=m.kind.value,
                      differential_lock=m.differential_lock, telemetry_period=m.telemetry_period,
                      motor=_motor_dict(m.motor), rangebox=_box_dict(m.rangebox), controller=_ctrl_dict(m.params))
                 for m in v.modules],
    )


def scenario_dict(s: Scenario) -> dict:
    def maneuver(mv: Maneuver):
        d = {'at': mv.at_time}
        for k in ('speed', 'torque', 'turn_radius', 'range', 'command'):
            val = getattr(mv, k)
            if val is not None:
                d[k] = val
        if mv.modules is not None:
            d['modules'] = list(mv.modules)
        return d

    def fault(f: FaultSpec):
        d = {'at': f.at_time, 'kind': f.kind.value}
        if f.module_id is not None:
            d['module'] = f.module_id
        if f.wheel is not None:
            d['wheel'] = f.wheel
        return d
    return dict(
        name=s.name, duration=s.duration, dt=s.dt, seed=s.seed, record_every=s.record_every,
        initial_speed=s.initial_speed, auto_enable=s.auto_enable, mu_jitter=s.mu_jitter,
        efficiency_target=s.efficiency_target, limp_home=s.limp_home,
        terrain=[{k: getattr(t, k) for k in TERRAIN_KEYS} for t in s.terrain],
        maneuvers=[maneuver(mv) for mv in s.maneuvers],
        faults=[fault(f) for f in s.faults],
    )


def serialize(vehicle: VehicleConfig, scenario: Optional[Scenario] = None) -> str:
    doc = {'vehicle': vehicle_dict(vehicle)}
    if scenario is not None:
        doc['scenario'] = scenario_dict(scenario)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)

