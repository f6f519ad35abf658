"""Planetary ratios, the two-range brake-shifted wheel gearbox and range arithmetic."""
from __future__ import annotations

import bisect
import csv
import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from .errors import BrakeOverload, InvalidToothCounts, NoSolution

DEFAULT_MESH_EFFICIENCY = 0.985
MESHES_PER_STAGE = 2  # sun-planet and planet-ring
MIN_SUN_TEETH = 12


class Arrangement(enum.Enum):
    SUN_IN_CARRIER_OUT_RING_FIXED = 'sun_in_carrier_out_ring_fixed'
    SUN_IN_RING_OUT_CARRIER_FIXED = 'sun_in_ring_out_carrier_fixed'


class BrakeState(enum.Enum):
    OPEN = 'open'
    CLOSED = 'closed'


class RangeState(enum.Enum):
    RANGE_A = 'A'
    RANGE_B = 'B'
    PARKED = 'P'
    FREE_WHEEL = 'F'


class ClearanceClass(enum.Enum):
    STANDARD = 'standard'
    PORTAL = 'portal'


@dataclass(frozen=True)
class PlanetaryStage:
    sun_teeth: int
    ring_teeth: int
    planet_count: int = 3
    arrangement: Arrangement = Arrangement.SUN_IN_CARRIER_OUT_RING_FIXED
    mesh_efficiency: float = DEFAULT_MESH_EFFICIENCY

    def __post_init__(self):
        zs, zr, n = self.sun_teeth, self.ring_teeth, self.planet_count
        if not (isinstance(zs, int) and isinstance(zr, int) and isinstance(n, int)):
            raise InvalidToothCounts('tooth and planet counts must be integers')
        if zs < MIN_SUN_TEETH:
            raise InvalidToothCounts(f'sun needs at least {MIN_SUN_TEETH} teeth, got {zs}')
        if zr <= zs:
            raise InvalidToothCounts(f'ring ({zr}) must have more teeth than sun ({zs})')
        if n < 1 or (zs + zr) % n:
            raise InvalidToothCounts(f'sun + ring = {zs + zr} not divisible by {n} planets')
        if not 0.9 < self.mesh_efficiency <= 1.0:
            raise InvalidToothCounts('mesh efficiency must lie in (0.9, 1]')

    @property
    def planet_teeth(self) -> Fraction:
        return Fraction(self.ring_teeth - self.sun_teeth, 2)

    @property
    def ratio(self) -> float:
        return float(planetary_ratio(self))

    @property
    def efficiency(self) -> float:
        return self.mesh_efficiency ** MESHES_PER_STAGE


def planetary_ratio(stage: Optional[PlanetaryStage]) -> Fraction:
    """Input/output speed ratio of one simple planetary set (exact).

    With the ring held the carrier turns ``1 + Zr/Zs`` times slower than the
    sun; with the carrier held the ring turns backwards at ``Zs/Zr``. ``None``
    stands for a direct coupling.
    """
    if stage is None:
        return Fraction(1)
    q = Fraction(stage.ring_teeth, stage.sun_teeth)
    if stage.arrangement is Arrangement.SUN_IN_CARRIER_OUT_RING_FIXED:
        return 1 + q
    return -q


@dataclass(frozen=True)
class RangeBox:
    """Two-stage wheel gearbox: a fixed first reduction and two selectable second stages.

    Closing B1 holds the ring of the range-A set, closing B2 that of range B.
    Both closed locks the carrier (parking), both open decouples the wheel.
    """
    stage1: Optional[PlanetaryStage]
    stage2_range_a: PlanetaryStage
    stage2_range_b: PlanetaryStage
    brake_b1: BrakeState = BrakeState.CLOSED
    brake_b2: BrakeState = BrakeState.OPEN
    brake_torque_limit: float = math.inf  # holding torque at the wheel, Nm

    def with_brakes(self, b1: BrakeState, b2: BrakeState) -> 'RangeBox':
        return RangeBox(self.stage1, self.stage2_range_a, self.stage2_range_b, b1, b2,
                        self.brake_torque_limit)

    def select(self, state: RangeState) -> 'RangeBox':
        return self.with_brakes(*BRAKES_FOR[state])

    def range_ratio(self, state: RangeState) -> float:
        stage2 = self.stage2_range_a if state is RangeState.RANGE_A else self.stage2_range_b
        return float(planetary_ratio(self.stage1) * planetary_ratio(stage2))

    def range_efficiency(self, state: RangeState) -> float:
        stage2 = self.stage2_range_a if state is RangeState.RANGE_A else self.stage2_range_b
        eff = stage2.efficiency
        if self.stage1 is not None:
            eff *= self.stage1.efficiency
        return eff


BRAKES_FOR = {
    RangeState.RANGE_A: (BrakeState.CLOSED, BrakeState.OPEN),
    RangeState.RANGE_B: (BrakeState.OPEN, BrakeState.CLOSED),
    RangeState.PARKED: (BrakeState.CLOSED, BrakeState.CLOSED),
    RangeState.FREE_WHEEL: (BrakeState.OPEN, BrakeState.OPEN),
}


def rangebox_state(box: RangeBox) -> RangeState:
    closed = BrakeState.CLOSED
    if box.brake_b1 is closed and box.brake_b2 is closed:
        return RangeState.PARKED
    if box.brake_b1 is closed:
        return RangeState.RANGE_A
    if box.brake_b2 is closed:
        return RangeState.RANGE_B
    return RangeState.FREE_WHEEL


def rangebox_ratio(box: RangeBox) -> Union[float, RangeState]:
    """Overall reduction in a drive range; the state itself when parked or free-wheeling."""
    state = rangebox_state(box)
    if state in (RangeState.PARKED, RangeState.FREE_WHEEL):
        return state
    return box.range_ratio(state)


def rangebox_efficiency(box: RangeBox) -> float:
    """Product of the engaged mesh efficiencies; 0 when nothing is transmitted."""
    state = rangebox_state(box)
    if state in (RangeState.PARKED, RangeState.FREE_WHEEL):
        return 0.0
    return box.range_efficiency(state)


def wheel_torque(box: RangeBox, motor_torque: float, motor_speed: float = 1.0) -> float:
    """Torque delivered to the wheel by the box for a given motor torque.

    Mesh losses reduce the output while motoring and increase the required
    motor torque while regenerating. FreeWheel and Parked transmit nothing
    from the motor.
    """
    state = rangebox_state(box)
    if state in (RangeState.PARKED, RangeState.FREE_WHEEL):
        return 0.0
    ratio = box.range_ratio(state)
    eff = box.range_efficiency(state)
    motoring = motor_torque * motor_speed >= 0
    return motor_torque * ratio * (eff if motoring else 1.0 / eff)


def park_reaction(box: RangeBox, ground_torque: float, motor_torque: float = 0.0) -> float:
    """Holding torque demanded from the closed brakes; raises BrakeOverload beyond the limit.

    Both the ground reaction and any motor torque (reflected through the
    range-A ratio, whose ring B1 holds) end on the brakes when parked.
    """
    if rangebox_state(box) is not RangeState.PARKED:
        raise ValueError('park_reaction needs both brakes closed')
    reflected = motor_torque * box.range_ratio(RangeState.RANGE_A)
    demand = abs(ground_torque + reflected)
    if demand > box.brake_torque_limit:
        raise BrakeOverload(
            f'holding torque {demand:.0f} Nm exceeds brake limit {box.brake_torque_limit:.0f} Nm')
    return demand


@dataclass(frozen=True)
class FinalDriveVariant:
    variant_id: int
    ratio: float
    ground_clearance_class: Optional[ClearanceClass] = None

    def __post_init__(self):
        if self.variant_id not in range(1, 6):
            raise ValueError('final drive variant_id must be 1..5')
        if self.ratio < 1:
            raise ValueError('final drive ratio must be >= 1')
        if self.ground_clearance_class is None:
            # designs 3-5 are portal layouts
            cls = ClearanceClass.STANDARD if self.variant_id <= 2 else ClearanceClass.PORTAL
            object.__setattr__(self, 'ground_clearance_class', cls)


def wheel_rpm(speed_kmh: float, rolling_radius: float) -> float:
    if speed_kmh < 0 or rolling_radius <= 0:
        raise ValueError('speed must be >= 0 and radius > 0')
    return speed_kmh / 3.6 / (2 * math.pi * rolling_radius) * 60


def required_reduction(motor_rpm: float, wheel_rpm_value: float) -> float:
    if motor_rpm <= 0 or wheel_rpm_value <= 0:
        raise ValueError('both speeds must be > 0')
    return motor_rpm / wheel_rpm_value


def range_spread(reductions: Iterable[float]) -> float:
    values = list(reductions)
    if not values or min(values) <= 0:
        raise ValueError('need positive reductions')
    return max(values) / min(values)


def speed_ratio_spread(v_min_field: float, v_max_road: float) -> float:
    if not 0 < v_min_field <= v_max_road:
        raise ValueError('need 0 < v_min <= v_max')
    return v_max_road / v_min_field


# gearbox synthesis

@dataclass(frozen=True)
class ToothConstraints:
    sun_min: int = MIN_SUN_TEETH
    sun_max: int = 60
    ring_max: int = 150
    planet_count: int = 3
    arrangement: Arrangement = Arrangement.SUN_IN_CARRIER_OUT_RING_FIXED
    mesh_efficiency: float = DEFAULT_MESH_EFFICIENCY
    coaxial: bool = True  # ring - sun even, so the planets have whole teeth


@dataclass(frozen=True)
class StageCandidate:
    stage: PlanetaryStage
    ratio: float
    error: float  # relative

    @property
    def row(self):
        return (self.stage.sun_teeth, self.stage.ring_teeth, self.stage.planet_count,
                self.ratio, self.error)


@dataclass(frozen=True)
class ChainCandidate:
    stage1: PlanetaryStage
    stage2: PlanetaryStage
    ratio: float
    error: float

    @property
    def key(self):
        return (self.stage1.sun_teeth, self.stage1.ring_teeth,
                self.stage2.sun_teeth, self.stage2.ring_teeth)


def feasible_stages(constraints: ToothConstraints) -> list[PlanetaryStage]:
    """Every stage inside the tooth bounds that satisfies the assembly conditions."""
    c = constraints
    out = []
    for zs in range(max(c.sun_min, MIN_SUN_TEETH), c.sun_max + 1):
        for zr in range(zs + 1, c.ring_max + 1):
            if (zs + zr) % c.planet_count:
                continue
            if c.coaxial and (zr - zs) % 2:
                continue
            out.append(PlanetaryStage(zs, zr, c.planet_count, c.arrangement, c.mesh_efficiency))
    return out


def _rel_error(ratio, target):
    return abs(ratio - target) / abs(target)


def synthesize_tooth_counts(target_ratio: float, tolerance: float,
                            constraints: ToothConstraints = ToothConstraints()) -> list[StageCandidate]:
    """All single stages within ``tolerance`` (relative) of the target, best first."""
    hits = []
    for stage in feasible_stages(constraints):
        r = planetary_ratio(stage)
        err = abs(Fraction(r) - Fraction(target_ratio)) / abs(Fraction(target_ratio))
        if err <= Fraction(tolerance):
            hits.append(StageCandidate(stage, float(r), float(err)))
    if not hits:
        raise NoSolution(f'no stage within {tolerance:.2%} of ratio {target_ratio}')
    hits.sort(key=lambda c: (c.error, c.stage.sun_teeth, c.stage.ring_teeth))
    return hits


def synthesize_two_stage(target_ratio: float, tolerance: float,
                         constraints: ToothConstraints = ToothConstraints()) -> list[ChainCandidate]:
    """All two-stage chains (stage1 x stage2) within ``tolerance`` of the overall target.

    Stage ratios are sorted once, and for each first stage the window of
    admissible second stages is found by bisection.
    """
    stages = feasible_stages(constraints)
    rated = sorted(((float(planetary_ratio(s)), s) for s in stages), key=lambda t: t[0])
    ratios = [r for r, _ in rated]
    lo_t = target_ratio * (1 - tolerance)
    hi_t = target_ratio * (1 + tolerance)
    hits = []
    for r1, s1 in rated:
        if r1 > 0:
            lo, hi = lo_t / r1, hi_t / r1
        else:
            lo, hi = hi_t / r1, lo_t / r1
        # widen by one ulp-scale margin; the exact test below decides
        i = bisect.bisect_left(ratios, lo - 1e-9 * abs(lo))
        j = bisect.bisect_right(ratios, hi + 1e-9 * abs(hi))
        for r2, s2 in rated[i:j]:
            exact = planetary_ratio(s1) * planetary_ratio(s2)
            err = abs(exact - Fraction(target_ratio)) / abs(Fraction(target_ratio))
            if err <= Fraction(tolerance):
                hits.append(ChainCandidate(s1, s2, float(exact), float(err)))
    if not hits:
        raise NoSolution(f'no two-stage chain within {tolerance:.2%} of ratio {target_ratio}')
    hits.sort(key=lambda c: (c.error,) + c.key)
    return hits


@dataclass(frozen=True)
class RangeBoxDesign:
    box: RangeBox
    error_a: float
    error_b: float


def design_rangebox(ratio_a: float, ratio_b: float, tolerance: float,
                    constraints: ToothConstraints = ToothConstraints(),
                    limit: int = 10) -> list[RangeBoxDesign]:
    """Shared first stage with one second stage per range, ranked by the worse range error."""
    chains_a = synthesize_two_stage(ratio_a, tolerance, constraints)
    chains_b = synthesize_two_stage(ratio_b, tolerance, constraints)
    best_b = {}
    for c in chains_b:
        k = (c.stage1.sun_teeth, c.stage1.ring_teeth)
        if k not in best_b:
            best_b[k] = c
    designs = {}
    for c in chains_a:
        k = (c.stage1.sun_teeth, c.stage1.ring_teeth)
        if k in designs or k not in best_b:
            continue
        b = best_b[k]
        designs[k] = RangeBoxDesign(RangeBox(c.stage1, c.stage2, b.stage2), c.error, b.error)
    if not designs:
        raise NoSolution('no shared first stage serves both ranges')
    ranked = sorted(designs.values(), key=lambda d: (max(d.error_a, d.error_b), d.error_a + d.error_b,
                                                     d.box.stage1.sun_teeth, d.box.stage1.ring_teeth))
    return ranked[:limit]


CANDIDATE_COLUMNS = ('sun', 'ring', 'planets', 'ratio', 'error')


def write_candidates_csv(candidates: Sequence[StageCandidate], fh):
    w = csv.writer(fh, lineterminator='\n')
    w.writerow(CANDIDATE_COLUMNS)
    for c in candidates:
        sun, ring, planets, ratio, err = c.row
        w.writerow((sun, ring, planets, repr(ratio), repr(err)))


def read_candidates_csv(fh) -> list[tuple]:
    rows = list(csv.reader(fh))
    if tuple(rows[0]) != CANDIDATE_COLUMNS:
        raise ValueError(f'unexpected header {rows[0]}')
    return [(int(s), int(r), int(p), float(ra), float(e)) for s, r, p, ra, e in rows[1:]]
