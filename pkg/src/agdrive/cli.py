"""Command-line entry point: ``agdrive {size,simulate,compare,spectrum}``.

Exit codes: 0 ok, 1 invalid input, 2 runtime fault (with --strict) or
failed library operation, 3 I/O error.
"""
from __future__ import annotations

import argparse
import io
import math
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import parse_baseline, parse_config, parse_scenario, parse_vehicle
from .duty import (LoadSpectrumSpec, calibration_report, Profile, exceedance_at, make_duty_cycle, sample_load_spectrum,
                   write_samples_csv)
from .errors import ConfigError, DrivelineError
from .kinematics import DriveConcept
from .modctrl import write_frame_log
from .powertrain import HECKMANN_REFERENCE, ElectricDrive, WorstCase, size_motors
from .simulator import limp_home_for, run_world, compute_metrics
from .transmission import (NoSolution, RangeState, ToothConstraints, design_rangebox, range_spread,
                           required_reduction, speed_ratio_spread, synthesize_two_stage, wheel_rpm)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

SINGLE_RANGE_SPREAD = 8.0


class IOFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f'{self.prog}: error: {message}\n')


def atomic_write(path: Path, text: str):
    """Write through a temporary file in the target directory, then rename over the target."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.')
        try:
            with os.fdopen(fd, 'w', newline='') as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IOFailure(f'{path}: {exc.strerror or exc}') from None


# comparison matrix

@dataclass(frozen=True)
class ComparisonMatrix:
    rows: tuple  # (criterion, wheel score, axle score)
    quantitative: tuple = ()  # (scenario, concept, metric dict)

    def to_tsv(self) -> str:
        out = ['\tWheel module\tAxle module']
        out += [f'{c}\t{w}\t{a}' for c, w, a in self.rows]
        return '\n'.join(out) + '\n'


TABLE1 = (
    ('Freedom for vehicle design', 5, 3),
    ('Scalability', 5, 4),
    ('Manufacturing costs', 3, 4),
    ('Cooling', 3, 4),
    ('Steerability', 5, 4),
    ('Realization of reduction', 4, 5),
    ('Power electronics costs', 3, 5),
    ('Electric motor costs', 3, 5),
    ('Change/repair of the unit', 5, 3),
    ('Controllability (degrees of freedom)', 5, 3),
    ('Replacement of conventional axles', 2, 4),
)

COMPARE_SCENARIOS = ('headland_turn', 'limp_flat', 'limp_steep')
QUANT_COLUMNS = ('scenario', 'concept', 'energy_wh', 'driveline_efficiency', 'min_turning_radius_m',
                 'final_speed_kmh', 'target_reached', 'limp_home')


def quantitative_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(','.join(QUANT_COLUMNS) + '\n')
    for r in rows:
        buf.write(','.join(str(r[c]) for c in QUANT_COLUMNS) + '\n')
    return buf.getvalue()


# size

def sizing_report(rolling_radius: float, motor_rpm: float, field_speed: float, road_speed,
                  min_field_speed: float, tolerance: float, profile: Profile, engine_power: float,
                  side_slope_deg: float, mu: float, mass: float, geometry, seed: int,
                  electric=None, hydrostatic=None) -> str:
    """Plain-text sizing report; every number comes from a library call."""
    lines = ['# sizing report', f'seed: {seed}', f'rolling_radius_m: {rolling_radius:g}',
             f'motor_speed_rpm: {motor_rpm:g}']
    n_field = wheel_rpm(field_speed, rolling_radius)
    red_field = required_reduction(motor_rpm, n_field)
    lines += [f'wheel_rpm_field ({field_speed:g} km/h): {n_field:.1f}',
              f'reduction_field: {red_field:.1f}']
    reductions = [red_field]
    if road_speed is not None:
        n_road = wheel_rpm(road_speed, rolling_radius)
        red_road = required_reduction(motor_rpm, n_road)
        reductions.append(red_road)
        spread = range_spread(reductions)
        top = road_speed
        lines += [f'wheel_rpm_road ({road_speed:g} km/h): {n_road:.1f}',
                  f'reduction_road: {red_road:.1f}',
                  f'range_spread: {spread:.2f}']
    else:
        top = field_speed
    speed_spread = speed_ratio_spread(min_field_speed, top)
    lines.append(f'speed_spread ({min_field_speed:g} to {top:g} km/h): {speed_spread:.2f}')
    if road_speed is None and speed_spread <= SINGLE_RANGE_SPREAD:
        rec = 'single range: no road mode, a single fixed reduction may be sufficient'
    elif speed_spread <= SINGLE_RANGE_SPREAD:
        rec = f'single range: spread {speed_spread:.1f}:1 may be achievable with a single range'
    else:
        rec = f'two ranges: spread {speed_spread:.1f}:1 exceeds {SINGLE_RANGE_SPREAD:g}:1'
    lines.append(f'recommendation: {rec}')

    lines.append('')
    lines.append('# tooth-count candidates (sun/ring, 3 planets, ring fixed)')
    if len(reductions) == 2:
        try:
            designs = design_rangebox(reductions[0], reductions[1], tolerance, ToothConstraints(), limit=3)
        except NoSolution as exc:
            lines.append(f'none: {exc}')
            designs = []
        for i, d in enumerate(designs, 1):
            b = d.box
            lines.append(
                f'{i}: stage1 {b.stage1.sun_teeth}/{b.stage1.ring_teeth}, '
                f'range A {b.stage2_range_a.sun_teeth}/{b.stage2_range_a.ring_teeth} '
                f'= {b.range_ratio(RangeState.RANGE_A):.2f} ({d.error_a:.2%}), '
                f'range B {b.stage2_range_b.sun_teeth}/{b.stage2_range_b.ring_teeth} '
                f'= {b.range_ratio(RangeState.RANGE_B):.2f} ({d.error_b:.2%})')
    else:
        try:
            chains = synthesize_two_stage(reductions[0], tolerance)[:3]
        except NoSolution as exc:
            lines.append(f'none: {exc}')
            chains = []
        for i, c in enumerate(chains, 1):
            lines.append(f'{i}: {c.stage1.sun_teeth}/{c.stage1.ring_teeth} x '
                         f'{c.stage2.sun_teeth}/{c.stage2.ring_teeth} = {c.ratio:.2f} ({c.error:.2%})')

    lines.append('')
    lines.append(f'# motor ratings ({profile.value}, {engine_power / 1e3:g} kW engine, '
                 f'side slope {side_slope_deg:g} deg, mu {mu:g})')
    duty = make_duty_cycle(profile, engine_power, hours=1.0, seed=seed, rolling_radius=rolling_radius)
    wc = WorstCase(math.radians(side_slope_deg), mu)
    for concept in (DriveConcept.WHEEL_MODULE, DriveConcept.AXLE_MODULE):
        s = size_motors(concept, duty, wc, mass, geometry, reduction=red_field, gear_efficiency=0.985 ** 4)
        lines.append(f'{concept.value}: {s.motors} motors, wheel torque {s.wheel_torque_rating / 1e3:.1f} kNm, '
                     f'motor torque {s.motor_torque_rating:.0f} Nm, power {s.power_rating / 1e3:.1f} kW, '
                     f'overdimensioning {s.overdimensioning_factor:.3f}')

    lines.append('')
    lines.append('# electric vs hydrostatic efficiency (calibration targets)')
    lines += calibration_report(electric, hydrostatic).to_text().splitlines()

    lines.append('')
    lines.append('# reference electric rear axle (2016 prices, 100 units/year)')
    for k, v in HECKMANN_REFERENCE.items():
        lines.append(f'{k}: {v}')
    return '\n'.join(lines) + '\n'


def cmd_size(args) -> int:
    vehicle = parse_vehicle(args.config)
    road = None if args.no_road else args.road_speed
    text = sizing_report(args.rolling_radius or vehicle.geometry.rolling_radius, args.motor_rpm,
                         args.field_speed, road, args.min_field_speed, args.tolerance,
                         Profile(args.profile), args.engine_power, args.side_slope, args.mu,
                         vehicle.mass, vehicle.geometry, args.seed,
                         electric=ElectricDrive(vehicle.modules[0].motor, vehicle.modules[0].ratio),
                         hydrostatic=parse_baseline(args.config))
    _emit(text, args.output)
    return EXIT_OK


# simulate

def simulation_outputs(vehicle, scenario):
    """Trace CSV, frame log CSV, text report and key-value metrics for one run."""
    world, trace = run_world(vehicle, scenario)
    metrics = compute_metrics(trace, scenario)
    frames = io.StringIO()
    write_frame_log(world.bus.log, frames)
    return {'trace.csv': trace.to_csv(), 'frames.csv': frames.getvalue(),
            'metrics.txt': metrics.to_text(), 'metrics.kv': metrics.to_keyvalue()}, metrics


def cmd_simulate(args) -> int:
    if args.config:
        vehicle, scenario = parse_config(args.config, require_scenario=args.scenario is None)
    else:
        if not args.vehicle:
            raise ConfigError('give --config, or --vehicle with --scenario')
        vehicle = parse_vehicle(args.vehicle)
        scenario = None
    if args.scenario:
        scenario = parse_scenario(args.scenario)
    if scenario is None:
        raise ConfigError('no scenario given')
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.dt is not None:
        scenario = replace(scenario, dt=args.dt)
    files, metrics = simulation_outputs(vehicle, scenario)
    out = Path(args.output_dir)
    for name, text in files.items():
        atomic_write(out / name, text)
    sys.stdout.write(metrics.to_text())
    if args.strict and metrics.fault_events:
        sys.stderr.write(f'agdrive: {len(metrics.fault_events)} fault event(s); first: {metrics.fault_events[0]}\n')
        return EXIT_RUNTIME
    return EXIT_OK


# compare

def compare(wheel_vehicle, axle_vehicle, scenarios) -> ComparisonMatrix:
    rows = []
    for sc in scenarios:
        for v in (wheel_vehicle, axle_vehicle):
            _, trace = run_world(v, sc)
            m = compute_metrics(trace, sc)
            limp = str(limp_home_for(v, sc)) if sc.faults else 'n/a'
            rows.append({'scenario': sc.name, 'concept': v.concept.value,
                         'energy_wh': f'{m.total_energy_wh:.2f}',
                         'driveline_efficiency': f'{m.driveline_efficiency:.4f}',
                         'min_turning_radius_m': f'{m.min_turning_radius:.2f}',
                         'final_speed_kmh': f'{m.final_speed_kmh:.2f}',
                         'target_reached': {None: 'n/a', True: 'yes', False: 'no'}[m.target_reached],
                         'limp_home': limp.split('(')[0]})
    return ComparisonMatrix(TABLE1, tuple(rows))


def cmd_compare(args) -> int:
    text = ComparisonMatrix(TABLE1).to_tsv()
    quant = ''
    if not args.qualitative_only:
        wheel = parse_vehicle(args.wheel_config)
        axle = parse_vehicle(args.axle_config)
        scenarios = [parse_scenario(s) for s in args.scenarios]
        result = compare(wheel, axle, scenarios)
        quant = quantitative_csv(result.quantitative)
    if args.output_dir:
        out = Path(args.output_dir)
        atomic_write(out / 'table1.tsv', text)
        if quant:
            atomic_write(out / 'quantitative.csv', quant)
    sys.stdout.write(text)
    if quant:
        sys.stdout.write('\n' + quant)
    return EXIT_OK


# spectrum

def spectrum_outputs(spec: LoadSpectrumSpec, n: int, step: float):
    samples = sample_load_spectrum(spec, n)
    levels = np.arange(0.0, spec.peak_max + step / 2, step)
    frac = exceedance_at(samples, levels)
    buf = io.StringIO()
    write_samples_csv(samples, buf)
    ex = io.StringIO()
    ex.write('load,fraction\n')
    for lv, f in zip(levels, frac):
        ex.write(f'{float(lv)!r},{float(f)!r}\n')
    summary = {
        'seed': spec.seed, 'n': n,
        'fraction_above_typical': float(np.mean(samples > spec.typical_high)),
        'exceedance_at_0.9_peak': float(exceedance_at(samples, [0.9 * spec.peak_max])[0]),
        'max': float(samples.max()),
    }
    return buf.getvalue(), ex.getvalue(), summary


def cmd_spectrum(args) -> int:
    spec = LoadSpectrumSpec(typical_low=args.typical_low, typical_high=args.typical_high, peak_max=args.peak_max,
                            peak_time_fraction=args.peak_fraction, seed=args.seed)
    if args.n <= 0:
        raise ConfigError('n must be > 0', path='--n')
    samples, exceed, summary = spectrum_outputs(spec, args.n, args.step)
    out = Path(args.output_dir)
    atomic_write(out / 'samples.csv', samples)
    atomic_write(out / 'exceedance.csv', exceed)
    sys.stdout.write(''.join(f'{k}: {v!r}\n' if isinstance(v, float) else f'{k}: {v}\n'
                             for k, v in summary.items()))
    return EXIT_OK


def _emit(text: str, output):
    if output:
        atomic_write(Path(output), text)
    sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog='agdrive', description='Modular electric ground-drive analysis.')
    p.add_argument('--version', action='version', version=f'agdrive {__version__}')
    sub = p.add_subparsers(dest='command', required=True, parser_class=_Parser)

    s = sub.add_parser('size', help='wheel speeds, reductions, tooth counts and motor ratings')
    s.add_argument('--config', default='wheel_4ws', help='vehicle config (name or path; default wheel_4ws)')
    s.add_argument('--rolling-radius', type=float, default=None, help='m; default from the vehicle config')
    s.add_argument('--motor-rpm', type=float, default=6000.0, help='nominal motor speed, rpm (default 6000)')
    s.add_argument('--field-speed', type=float, default=12.0, help='top field speed, km/h (default 12)')
    s.add_argument('--road-speed', type=float, default=40.0, help='top road speed, km/h (default 40)')
    s.add_argument('--no-road', action='store_true', help='field robot without road mode')
    s.add_argument('--min-field-speed', type=float, default=3.0, help='km/h, for the speed spread (default 3)')
    s.add_argument('--tolerance', type=float, default=0.02, help='relative ratio tolerance (default 0.02)')
    s.add_argument('--profile', default='ForageHarvester', choices=[x.value for x in Profile],
                   help='duty profile for motor ratings')
    s.add_argument('--engine-power', type=float, default=750e3, help='W (default 750e3)')
    s.add_argument('--side-slope', type=float, default=10.0, help='worst-case side slope, deg (default 10)')
    s.add_argument('--mu', type=float, default=0.6, help='worst-case adhesion (default 0.6)')
    s.add_argument('--seed', type=int, default=0, help='duty-cycle seed (default 0)')
    s.add_argument('--output', default=None, help='also write the report to this file')
    s.set_defaults(func=cmd_size)

    s = sub.add_parser('simulate', help='run one scenario and write trace, frame log and metrics')
    s.add_argument('--config', default=None, help='file with vehicle and scenario sections')
    s.add_argument('--vehicle', default=None, help='vehicle config (name or path)')
    s.add_argument('--scenario', default=None, help='scenario config (name or path)')
    s.add_argument('--output-dir', required=True, help='created if missing')
    s.add_argument('--seed', type=int, default=None, help='override the scenario seed')
    s.add_argument('--dt', type=float, default=None, help='override the scenario step, s')
    s.add_argument('--strict', action='store_true', help='exit 2 if any fault event occurred')
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser('compare', help='qualitative matrix plus simulated comparison of both concepts')
    s.add_argument('--wheel-config', default='wheel_4ws', help='wheel-module vehicle (default wheel_4ws)')
    s.add_argument('--axle-config', default='axle_front', help='axle-module vehicle (default axle_front)')
    s.add_argument('--scenarios', nargs='+', default=list(COMPARE_SCENARIOS), help='scenario configs')
    s.add_argument('--qualitative-only', action='store_true', help='skip the simulations')
    s.add_argument('--output-dir', default=None, help='write table1.tsv and quantitative.csv here')
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser('spectrum', help='sample the load spectrum and its exceedance curve')
    s.add_argument('--n', type=int, default=1_000_000, help='sample count (default 1e6)')
    s.add_argument('--seed', type=int, default=0, help='default 0')
    s.add_argument('--typical-low', type=float, default=50.0, help='default 50')
    s.add_argument('--typical-high', type=float, default=200.0, help='default 200')
    s.add_argument('--peak-max', type=float, default=450.0, help='default 450')
    s.add_argument('--peak-fraction', type=float, default=0.001, help='default 0.001')
    s.add_argument('--step', type=float, default=5.0, help='exceedance grid step (default 5)')
    s.add_argument('--output-dir', required=True, help='created if missing')
    s.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IOFailure as exc:
        sys.stderr.write(f'agdrive: I/O error: {exc}\n')
        return EXIT_IO
    except FileNotFoundError as exc:
        sys.stderr.write(f'agdrive: {exc}\n')
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        sys.stderr.write(f'agdrive: invalid input: {exc}\n')
        return EXIT_VALIDATION
    except DrivelineError as exc:
        sys.stderr.write(f'agdrive: {type(exc).__name__}: {exc}\n')
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
