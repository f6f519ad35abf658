"""Load spectra, duty cycles and efficiency-target curves."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .errors import OutOfEnvelope


# load spectra

@dataclass(frozen=True)
class LoadSpectrumSpec:
    """Two-process mixture: a typical band most of the time plus a rare peak tail.

    Loads are in abstract units (bar for the default harvester spectrum);
    ``torque_per_unit`` maps them linearly onto wheel torque where needed.
    """
    typical_low: float = 50.0
    typical_high: float = 200.0
    peak_max: float = 450.0
    peak_time_fraction: float = 0.001
    typical_sigma: Optional[float] = None  # default: a quarter of the band width
    peak_scale: float = 80.0               # e-folding length of the peak tail
    seed: int = 0
    torque_per_unit: float = 1.0

    def __post_init__(self):
        if not self.typical_low < self.typical_high < self.peak_max:
            raise ValueError('need typical_low < typical_high < peak_max')
        if not 0 <= self.peak_time_fraction <= 0.001:
            raise ValueError('peak_time_fraction must lie in [0, 0.001]')
        if self.peak_scale <= 0:
            raise ValueError('peak_scale must be > 0')

    @property
    def sigma(self) -> float:
        if self.typical_sigma is not None:
            return self.typical_sigma
        return (self.typical_high - self.typical_low) / 4


def sample_load_spectrum(spec: LoadSpectrumSpec, n: int, seed: Optional[int] = None) -> np.ndarray:
    """Draw ``n`` loads from the mixture by inverse-CDF sampling.

    The typical process is a normal centred in the band and truncated to
    it; the peak process is an exponential tail from the band's upper edge,
    truncated at ``peak_max``.
    """
    if n <= 0:
        raise ValueError('n must be > 0')
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    pick = rng.random(n)
    u = rng.random(n)
    is_peak = pick < spec.peak_time_fraction

    lo, hi = spec.typical_low, spec.typical_high
    mid, sd = (lo + hi) / 2, spec.sigma
    a = special.ndtr((lo - mid) / sd)
    b = special.ndtr((hi - mid) / sd)
    typical = mid + sd * special.ndtri(a + u * (b - a))

    span = spec.peak_max - hi
    tail_mass = -math.expm1(-span / spec.peak_scale)
    peak = hi - spec.peak_scale * np.log1p(-u * tail_mass)

    out = np.where(is_peak, peak, typical)
    return np.clip(out, lo, spec.peak_max)


def exceedance_curve(samples) -> tuple[np.ndarray, np.ndarray]:
    """Distinct loads and the fraction of samples at or above each (1 at the minimum)."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError('need at least one sample')
    loads, first = np.unique(x, return_index=True)
    return loads, (x.size - first) / x.size


def exceedance_at(samples, levels) -> np.ndarray:
    """Fraction of samples at or above each level."""
    x = np.sort(np.asarray(samples, dtype=float))
    idx = np.searchsorted(x, np.asarray(levels, dtype=float), side='left')
    return (x.size - idx) / x.size


def write_samples_csv(samples, fh):
    fh.write('load\n')
    for v in samples:
        fh.write(repr(float(v)) + '\n')


def write_exceedance_csv(loads, fractions, fh):
    fh.write('load,fraction\n')
    for x, f in zip(loads, fractions):
        fh.write(f'{float(x)!r},{float(f)!r}\n')


def read_samples_csv(fh) -> np.ndarray:
    header = fh.readline().strip()
    if header != 'load':
        raise ValueError(f'unexpected header {header!r}')
    return np.array([float(line) for line in fh if line.strip()])


# duty cycles

class Direction(enum.Enum):
    FORWARD = 'forward'
    REVERSE = 'reverse'


@dataclass(frozen=True)
class DutySegment:
    duration: float        # s
    vehicle_speed: float   # km/h, magnitude
    wheel_torque: float    # Nm, mean per driven wheel
    direction: Direction = Direction.FORWARD

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError('segment duration must be > 0')
        if self.vehicle_speed < 0:
            raise ValueError('vehicle_speed is a magnitude; use direction for reversing')


@dataclass(frozen=True)
class DutyCycle:
    segments: tuple[DutySegment, ...]

    @property
    def total_time(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    @property
    def reverse_fraction(self) -> float:
        rev = math.fsum(s.duration for s in self.segments if s.direction is Direction.REVERSE)
        return rev / self.total_time

    def ground_power(self, seg: DutySegment, rolling_radius: float, driven_wheels: int) -> float:
        return driven_wheels * abs(seg.wheel_torque) * seg.vehicle_speed / 3.6 / rolling_radius

    def mean_ground_power(self, rolling_radius: float = 0.78, driven_wheels: int = 4) -> float:
        e = math.fsum(self.ground_power(s, rolling_radius, driven_wheels) * s.duration
                      for s in self.segments)
        return e / self.total_time


class Profile(enum.Enum):
    FORAGE_HARVESTER = 'ForageHarvester'
    COMBINE = 'Combine'
    ROOT_CROP = 'RootCrop'
    EQUIPMENT_CARRIER = 'EquipmentCarrier'
    FIELD_ROBOT = 'FieldRobot'


@dataclass(frozen=True)
class SegmentKind:
    name: str
    time_fraction: float        # <0 means "whatever remains"
    speeds: tuple[float, ...]   # km/h choices
    power_fraction: tuple[float, float]  # of engine power, at ref_speed
    ref_speed: float            # km/h; force is constant, so power scales with speed
    duration: tuple[float, float]
    direction: Direction = Direction.FORWARD


@dataclass(frozen=True)
class ProfileSpec:
    ground_band: tuple[float, float]   # mean ground-drive share of engine power
    field_speed: tuple[float, float]   # km/h
    kinds: tuple[SegmentKind, ...]


def _speeds(lo, hi, step=1.0):
    n = int(round((hi - lo) / step))
    return tuple(lo + i * step for i in range(n + 1))


PROFILES = {
    Profile.FORAGE_HARVESTER: ProfileSpec(
        ground_band=(0.05, 0.40), field_speed=(3.0, 8.0), kinds=(
            SegmentKind('field', -1, _speeds(4, 8), (0.095, 0.105), 8.0, (60, 240)),
            SegmentKind('heavy', 0.05, _speeds(3, 5), (0.15, 0.25), 5.0, (20, 90)),
            SegmentKind('reverse', 0.13, _speeds(3, 6), (0.02, 0.05), 5.0, (10, 45), Direction.REVERSE),
            SegmentKind('road', 0.30, _speeds(25, 40, 5), (0.18, 0.25), 40.0, (120, 600)),
            SegmentKind('peak', 0.001, (3.0, 4.0), (0.25, 0.30), 5.0, (2, 6)),
        )),
    Profile.COMBINE: ProfileSpec(
        ground_band=(0.20, 0.40), field_speed=(3.0, 8.0), kinds=(
            SegmentKind('field', -1, _speeds(3, 8), (0.24, 0.32), 6.0, (60, 300)),
            SegmentKind('heavy', 0.08, _speeds(3, 5), (0.30, 0.40), 5.0, (20, 90)),
            SegmentKind('reverse', 0.03, _speeds(3, 5), (0.03, 0.06), 5.0, (10, 30), Direction.REVERSE),
            SegmentKind('road', 0.15, _speeds(25, 40, 5), (0.30, 0.40), 40.0, (120, 600)),
            SegmentKind('peak', 0.001, (3.0, 4.0), (0.40, 0.45), 5.0, (2, 6)),
        )),
    Profile.ROOT_CROP: ProfileSpec(
        ground_band=(0.25, 0.50), field_speed=(4.0, 7.0), kinds=(
            SegmentKind('field', -1, _speeds(4, 7), (0.28, 0.36), 6.0, (60, 240)),
            SegmentKind('heavy', 0.10, _speeds(4, 5), (0.40, 0.50), 5.0, (20, 90)),
            SegmentKind('reverse', 0.05, _speeds(3, 5), (0.04, 0.08), 5.0, (10, 30), Direction.REVERSE),
            SegmentKind('road', 0.15, _speeds(20, 25), (0.30, 0.40), 25.0, (120, 600)),
            SegmentKind('peak', 0.001, (4.0,), (0.50, 0.55), 5.0, (2, 6)),
        )),
    Profile.EQUIPMENT_CARRIER: ProfileSpec(
        ground_band=(0.40, 0.80), field_speed=(4.0, 12.0), kinds=(
            SegmentKind('field', -1, _speeds(4, 12), (0.50, 0.65), 10.0, (120, 600)),
            SegmentKind('reverse', 0.03, _speeds(3, 5), (0.05, 0.10), 5.0, (10, 30), Direction.REVERSE),
            SegmentKind('road', 0.20, _speeds(30, 40, 5), (0.45, 0.60), 40.0, (120, 600)),
            SegmentKind('peak', 0.001, (4.0,), (0.80, 0.85), 6.0, (2, 6)),
        )),
    Profile.FIELD_ROBOT: ProfileSpec(
        ground_band=(0.30, 0.90), field_speed=(1.0, 8.0), kinds=(
            SegmentKind('field', -1, _speeds(1, 8), (0.55, 0.70), 6.0, (30, 300)),
            SegmentKind('reverse', 0.05, _speeds(1, 3), (0.20, 0.30), 3.0, (5, 20), Direction.REVERSE),
            SegmentKind('peak', 0.001, (2.0,), (0.85, 0.90), 3.0, (1, 3)),
        )),
}


def make_duty_cycle(profile, engine_power: float, hours: float = 1.0, seed: int = 0,
                    rolling_radius: float = 0.78, driven_wheels: int = 4,
                    exclude: Sequence[str] = ()) -> DutyCycle:
    """Synthesize a shuffled duty cycle whose time shares follow the profile exactly.

    Each kind's segments are drawn until its time share is filled (the last
    one trimmed), so e.g. the forage harvester reverses for exactly 13% of
    the time. Field speeds cycle through the profile's speed choices before
    shuffling, so every choice occurs once the kind has enough segments.
    Kinds listed in ``exclude`` are dropped after generation.
    """
    profile = Profile(profile)
    if engine_power <= 0 or hours <= 0:
        raise ValueError('engine_power and hours must be > 0')
    spec = PROFILES[profile]
    rng = np.random.default_rng(seed)
    total = hours * 3600.0
    fixed = math.fsum(k.time_fraction for k in spec.kinds if k.time_fraction >= 0)
    segments = []
    for kind in spec.kinds:
        share = kind.time_fraction if kind.time_fraction >= 0 else 1.0 - fixed
        budget = share * total
        filled = 0.0
        i = 0
        while budget - filled > 1e-9:
            d = min(float(rng.uniform(*kind.duration)), budget - filled)
            speed = kind.speeds[i % len(kind.speeds)]
            pf = float(rng.uniform(*kind.power_fraction)) * speed / kind.ref_speed
            omega = speed / 3.6 / rolling_radius
            torque = pf * engine_power / (driven_wheels * omega)
            segments.append((kind.name, DutySegment(d, speed, torque, kind.direction)))
            filled += d
            i += 1
    order = rng.permutation(len(segments))
    kept = tuple(segments[j][1] for j in order if segments[j][0] not in exclude)
    return DutyCycle(kept)


def field_cycle(seed: int = 0) -> DutyCycle:
    """The shipped forage-harvester field cycle (road transport removed)."""
    return make_duty_cycle(Profile.FORAGE_HARVESTER, engine_power=750e3, hours=1.0, seed=seed,
                           exclude=('road',))


DUTY_COLUMNS = ('duration_s', 'speed_kmh', 'torque_Nm', 'direction')


def write_duty_csv(duty: DutyCycle, fh):
    w = csv.writer(fh, lineterminator='\n')
    w.writerow(DUTY_COLUMNS)
    for s in duty.segments:
        w.writerow((repr(s.duration), repr(s.vehicle_speed), repr(s.wheel_torque), s.direction.value))


def read_duty_csv(fh) -> DutyCycle:
    rows = list(csv.reader(fh))
    if tuple(rows[0]) != DUTY_COLUMNS:
        raise ValueError(f'unexpected duty header {rows[0]}')
    return DutyCycle(tuple(DutySegment(float(d), float(v), float(t), Direction(dr))
                           for d, v, t, dr in rows[1:]))


def cycle_weighted_efficiency(duty: DutyCycle, model, rolling_radius: float = 0.78) -> float:
    """Energy-weighted efficiency: total output energy over total input energy.

    Segments that transmit no power carry no weight.
    """
    out = []
    inp = []
    for i, seg in enumerate(duty.segments):
        omega = seg.vehicle_speed / 3.6 / rolling_radius
        torque = abs(seg.wheel_torque)
        if torque * omega == 0:
            continue
        try:
            p_in = model.input_power(torque, omega)
        except OutOfEnvelope as exc:
            raise OutOfEnvelope(str(exc), segment=i) from None
        out.append(torque * omega * seg.duration)
        inp.append(p_in * seg.duration)
    if not inp:
        raise ValueError('duty cycle transmits no power')
    return math.fsum(out) / math.fsum(inp)


# electric vs hydrostatic calibration

ANCHOR_TORQUE = 4500.0  # Nm at the wheel
ANCHOR_SPEED = 5.0      # km/h
ANCHOR_DELTA_MIN = 0.17
CYCLE_DELTA_BAND = (0.23, 0.27)


@dataclass(frozen=True)
class CalibrationReport:
    anchor_electric: float
    anchor_hydrostatic: float
    cycle_electric: float
    cycle_hydrostatic: float

    @property
    def anchor_delta(self) -> float:
        return self.anchor_electric - self.anchor_hydrostatic

    @property
    def cycle_delta(self) -> float:
        return self.cycle_electric - self.cycle_hydrostatic

    @property
    def ok(self) -> bool:
        lo, hi = CYCLE_DELTA_BAND
        return self.anchor_delta >= ANCHOR_DELTA_MIN and lo <= self.cycle_delta <= hi

    def to_text(self) -> str:
        lo, hi = CYCLE_DELTA_BAND
        return (f'anchor ({ANCHOR_TORQUE / 1e3:g} kNm, {ANCHOR_SPEED:g} km/h): electric {self.anchor_electric:.4f}, '
                f'hydrostatic {self.anchor_hydrostatic:.4f}, delta {self.anchor_delta:.4f} '
                f'(target >= {ANCHOR_DELTA_MIN})\n'
                f'field cycle: electric {self.cycle_electric:.4f}, hydrostatic {self.cycle_hydrostatic:.4f}, '
                f'delta {self.cycle_delta:.4f} (target {lo}..{hi})\n'
                f'calibrated defaults, not predictions: {"ok" if self.ok else "OUT OF TARGET"}\n')


def calibration_report(electric=None, hydrostatic=None, duty: Optional[DutyCycle] = None,
                       rolling_radius: float = 0.78) -> CalibrationReport:
    """Efficiency deltas at the anchor point and over a duty cycle (defaults: shipped maps and field cycle)."""
    from .powertrain import HydrostaticBaseline, default_electric_drive, drive_efficiency
    electric = electric or default_electric_drive()
    hydrostatic = hydrostatic or HydrostaticBaseline()
    duty = duty or field_cycle()
    omega = ANCHOR_SPEED / 3.6 / rolling_radius
    return CalibrationReport(drive_efficiency(electric, ANCHOR_TORQUE, omega),
                             drive_efficiency(hydrostatic, ANCHOR_TORQUE, omega),
                             cycle_weighted_efficiency(duty, electric, rolling_radius),
                             cycle_weighted_efficiency(duty, hydrostatic, rolling_radius))


def fit_hydrostatic(cycle_delta: float = 0.25, anchors=((0.5, 0.5, 0.80), (1.0, 0.3, 0.80)),
                    electric=None, duty: Optional[DutyCycle] = None, base=None):
    """Least-squares fit of the hydrostatic loss coefficients.

    Targets the cycle-weighted delta against ``electric`` plus point
    efficiencies ``(torque_fraction, speed_fraction, eta)`` that pin the
    rated-region shape of the map.
    """
    from dataclasses import replace
    from scipy.optimize import least_squares
    from .powertrain import HydrostaticBaseline, default_electric_drive
    electric = electric or default_electric_drive()
    duty = duty or field_cycle()
    base = base or HydrostaticBaseline()
    e_cycle = cycle_weighted_efficiency(duty, electric)
    names = ('const_loss', 'speed_loss', 'torque_loss', 'power_loss')

    def make(p):
        return replace(base, **{n: float(v) for n, v in zip(names, p)})

    def residual(p):
        h = make(p)
        r = [e_cycle - cycle_weighted_efficiency(duty, h) - cycle_delta]
        r += [0.3 * (h.eta(tf, sf) - eta) for tf, sf, eta in anchors]
        return r

    sol = least_squares(residual, [0.001, 0.01, 0.01, 0.15], bounds=([0.0] * 4, [1.0] * 4), xtol=1e-12)
    return make(sol.x)


# efficiency targets

class TargetLabel(enum.Enum):
    RENIUS_TRACTOR = 'ReniusTractor'
    BERNHARD_HARVESTER = 'BernhardHarvester'
    CUSTOM = 'Custom'


@dataclass(frozen=True)
class EfficiencyTarget:
    knots: tuple[tuple[float, float], ...]   # (speed km/h, eta)
    focus_range: tuple[float, float]
    label: TargetLabel = TargetLabel.CUSTOM

    def __post_init__(self):
        speeds = [k[0] for k in self.knots]
        if len(speeds) < 2 or any(b <= a for a, b in zip(speeds, speeds[1:])):
            raise ValueError('knots must be strictly increasing in speed')
        if any(not 0 < k[1] < 1 for k in self.knots):
            raise ValueError('knot efficiencies must lie in (0, 1)')


# Illustrative knots for a full-load CVT target curve, not measured values.
# Replace via config for real assessments.
RENIUS_DEFAULT = EfficiencyTarget(
    knots=((2.0, 0.74), (4.0, 0.82), (6.0, 0.86), (9.0, 0.88), (12.0, 0.88),
           (20.0, 0.86), (30.0, 0.85), (40.0, 0.84)),
    focus_range=(6.0, 12.0),
    label=TargetLabel.RENIUS_TRACTOR,
)

HARVESTER_FOCUS = (3.0, 8.0)
HARVESTER_OFFSET = Decimal('0.10')


def target_eta(target: EfficiencyTarget, speed: float) -> float:
    """Piecewise-linear target efficiency; clamped to the end knots outside their range."""
    xs = [k[0] for k in target.knots]
    ys = [k[1] for k in target.knots]
    return float(np.interp(speed, xs, ys))


def shift_target(target: EfficiencyTarget, delta, label=None, focus_range=None) -> EfficiencyTarget:
    """Offset every knot efficiency by ``delta`` using decimal arithmetic on the printed values."""
    d = Decimal(str(delta))
    knots = tuple((v, float(Decimal(repr(e)) + d)) for v, e in target.knots)
    return EfficiencyTarget(knots, focus_range or target.focus_range, label or target.label)


def bernhard_from_renius(renius: EfficiencyTarget) -> EfficiencyTarget:
    """Harvester ground-drive target: ten points lower, focused on 3-8 km/h."""
    return shift_target(renius, -HARVESTER_OFFSET, TargetLabel.BERNHARD_HARVESTER, HARVESTER_FOCUS)
