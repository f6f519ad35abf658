"""Electric motor envelope and losses, the hydrostatic baseline, wheel loads,
motor sizing under asymmetric load and DC bus energy accounting."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .errors import BusUnderrun, InfeasibleDuty, OutOfEnvelope, SpeedOutOfRange, TipOver
from .kinematics import DriveConcept, VehicleGeometry

G = 9.81
RPM = 2 * math.pi / 60

# Reference data from the forage-harvester electric rear-axle prototype
# (2016 prices, 100 units/year). Reported only, never used in physics.
HECKMANN_REFERENCE = {
    'electric_axle_cost_keur': 29.5,
    'hydrostatic_axle_cost_keur': 6.5,
    'cost_ratio': 4.5,
    'hydrostatic_weight_to_power_kg_per_kw': 18.2,
    'electric_weight_to_power_kg_per_kw': 36.3,
    'production_volume_per_year': 100,
    'price_year': 2016,
    'anchor_advantage_pp': 17,
    'cycle_advantage_pp': (23, 27),
}


class TorqueMode(enum.Enum):
    CONTINUOUS = 'continuous'
    PEAK = 'peak'


@dataclass(frozen=True)
class LossParams:
    copper_coeff: float = 0.026      # W per Nm^2
    iron_coeff: float = 0.0635       # W per (rad/s)^1.5
    inverter_fixed: float = 100.0    # W while energised
    inverter_prop: float = 0.02      # fraction of inverter AC power

    def __post_init__(self):
        for name in ('copper_coeff', 'iron_coeff', 'inverter_fixed', 'inverter_prop'):
            if getattr(self, name) < 0:
                raise ValueError(f'{name} must be >= 0')


@dataclass(frozen=True)
class MotorSpec:
    continuous_power: float
    peak_power: float
    base_speed: float          # rad/s
    max_speed: float           # rad/s
    nominal_speed: float = 6000.0  # rpm, reporting only
    loss_params: LossParams = LossParams()
    overload_budget: float = 200e3  # J above the continuous rating
    inertia: float = 0.12          # kg m^2, rotor

    def __post_init__(self):
        if not self.peak_power >= self.continuous_power > 0:
            raise ValueError('need peak_power >= continuous_power > 0')
        if not self.max_speed > self.base_speed > 0:
            raise ValueError('need max_speed > base_speed > 0')
        if self.overload_budget < 0 or self.inertia < 0:
            raise ValueError('overload budget and inertia must be >= 0')


def motor_torque_limit(spec: MotorSpec, speed: float, mode: TorqueMode = TorqueMode.CONTINUOUS) -> float:
    """Constant torque up to base speed, constant power above. Sign of speed is ignored."""
    w = abs(speed)
    if w > spec.max_speed * (1 + 1e-12):
        raise SpeedOutOfRange(f'{w:.1f} rad/s exceeds max speed {spec.max_speed:.1f} rad/s')
    power = spec.peak_power if mode is TorqueMode.PEAK else spec.continuous_power
    return power / max(w, spec.base_speed)


def motor_losses(spec: MotorSpec, torque: float, speed: float) -> tuple[float, float]:
    """(motor loss, inverter loss) in W for one operating point of an energised motor."""
    p = spec.loss_params
    motor = p.copper_coeff * torque * torque + p.iron_coeff * abs(speed) ** 1.5
    ac = torque * speed + motor
    inverter = p.inverter_fixed + p.inverter_prop * abs(ac)
    return motor, inverter


def motor_dc_power(spec: MotorSpec, torque: float, speed: float) -> float:
    """DC bus power drawn by motor and inverter (negative when regenerating)."""
    motor, inverter = motor_losses(spec, torque, speed)
    return torque * speed + motor + inverter


# drive models for efficiency comparison; all work on one wheel

WHEEL_MOTOR = MotorSpec(50e3, 100e3, 2000 * RPM, 6600 * RPM)
AXLE_MOTOR = MotorSpec(100e3, 200e3, 2000 * RPM, 6600 * RPM, inertia=0.24)
DEFAULT_REDUCTION = 145.8  # range A of the shipped 15/147 + 12/150 planetary box


@dataclass(frozen=True)
class ElectricDrive:
    motor: MotorSpec
    reduction: float
    gear_efficiency: float = 0.985 ** 4

    def input_power(self, wheel_torque: float, wheel_speed: float) -> float:
        out = wheel_torque * wheel_speed
        if out <= 0:
            raise OutOfEnvelope('efficiency maps cover motoring points only')
        motor_speed = wheel_speed * self.reduction
        motor_torque = wheel_torque / (self.reduction * self.gear_efficiency)
        try:
            limit = motor_torque_limit(self.motor, motor_speed, TorqueMode.PEAK)
        except SpeedOutOfRange as exc:
            raise OutOfEnvelope(str(exc)) from None
        if abs(motor_torque) > limit * (1 + 1e-12):
            raise OutOfEnvelope(f'motor torque {motor_torque:.1f} Nm above peak {limit:.1f} Nm')
        return motor_dc_power(self.motor, motor_torque, motor_speed)


def default_electric_drive() -> ElectricDrive:
    return ElectricDrive(WHEEL_MOTOR, DEFAULT_REDUCTION)


@dataclass(frozen=True)
class HydrostaticBaseline:
    """Series hydrostatic wheel drive as a loss surface over load and speed fractions.

    Losses, in units of rated power: a constant part (boost pump, churning),
    a flow-proportional part, a pressure-proportional part (leakage) and a
    part proportional to the transmitted power. Efficiency is
    ``P / (P + losses)`` with ``P = torque_fraction * speed_fraction``.
    """
    rated_torque: float = 60e3  # Nm at the wheel
    rated_speed: float = 14.25  # rad/s at the wheel (40 km/h on r = 0.78 m)
    # calibration targets, see scripts/calibrate_hydrostatic.py
    const_loss: float = 0.0
    speed_loss: float = 0.0285
    torque_loss: float = 0.0214
    power_loss: float = 0.15

    def __post_init__(self):
        if not (self.rated_torque > 0 and self.rated_speed > 0):
            raise ValueError('rated torque and speed must be > 0')
        for name in ('const_loss', 'speed_loss', 'torque_loss', 'power_loss'):
            if getattr(self, name) < 0:
                raise ValueError(f'{name} must be >= 0')

    def eta(self, torque_fraction: float, speed_fraction: float) -> float:
        p = torque_fraction * speed_fraction
        if p <= 0:
            return 0.0
        loss = (self.const_loss + self.speed_loss * speed_fraction
                + self.torque_loss * torque_fraction + self.power_loss * p)
        return p / (p + loss)

    def input_power(self, wheel_torque: float, wheel_speed: float) -> float:
        out = wheel_torque * wheel_speed
        if out <= 0:
            raise OutOfEnvelope('efficiency maps cover motoring points only')
        tf = abs(wheel_torque) / self.rated_torque
        sf = abs(wheel_speed) / self.rated_speed
        if tf > 1 + 1e-12 or sf > 1 + 1e-12:
            raise OutOfEnvelope(f'torque fraction {tf:.3f} / speed fraction {sf:.3f} beyond rating')
        return out / self.eta(tf, sf)


@dataclass(frozen=True)
class ConstantEfficiency:
    eta: float

    def input_power(self, wheel_torque: float, wheel_speed: float) -> float:
        return abs(wheel_torque * wheel_speed) / self.eta


def drive_efficiency(model, torque: float, speed: float) -> float:
    """Output over input power of one wheel drive; 0 at zero torque or speed by convention."""
    out = torque * speed
    if out == 0:
        return 0.0
    return out / model.input_power(torque, speed)


# wheel loads

def wheel_load_distribution(mass: float, geom: VehicleGeometry, side_slope: float = 0.0,
                            longitudinal_slope: float = 0.0):
    """Quasi-static normal loads (N) FL, FR, RL, RR on a slope.

    ``longitudinal_slope`` > 0 is uphill (load moves to the rear axle);
    ``side_slope`` > 0 puts the right-hand side downhill. Each axle's
    lateral transfer is its own load times ``(h/T) tan(side_slope)``.
    """
    lim = math.radians(30)
    if abs(side_slope) >= lim or abs(longitudinal_slope) >= lim:
        raise ValueError('slopes must stay below 30 degrees')
    W = mass * G
    normal = W * math.cos(longitudinal_slope) * math.cos(side_slope)
    h, L = geom.cog_height, geom.wheelbase
    front = (normal * geom.cog_longitudinal_offset - W * math.sin(longitudinal_slope) * h) / L
    rear = normal - front
    k = h / geom.track_width * math.tan(side_slope)
    loads = (front / 2 - front * k, front / 2 + front * k,
             rear / 2 - rear * k, rear / 2 + rear * k)
    if min(loads) < 0:
        raise TipOver(f'negative wheel load {min(loads):.0f} N')
    return loads


# motor sizing

@dataclass(frozen=True)
class WorstCase:
    side_slope: float = 0.0          # rad
    mu: float = 0.6
    longitudinal_slope: float = 0.0  # rad

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError('mu must be > 0')
        if not (abs(self.side_slope) < math.pi / 2 and abs(self.longitudinal_slope) < math.pi / 2):
            raise ValueError('slopes must lie within +-90 deg')


@dataclass(frozen=True)
class SizingResult:
    concept: DriveConcept
    motors: int
    wheel_torque_rating: float   # Nm at the wheel(s) of one motor
    power_rating: float          # W per motor
    axle_torque_rating: float    # the axle-module equivalent, for reference
    overdimensioning_factor: float
    motor_torque_rating: Optional[float] = None  # Nm at the motor shaft, if a reduction was given


def size_motors(concept: DriveConcept, duty, worst_case: WorstCase, mass: float, geom: VehicleGeometry,
                driven_wheels: int = 4, reduction: Optional[float] = None,
                torque_ceiling: Optional[float] = None, gear_efficiency: float = 1.0) -> SizingResult:
    """Per-motor ratings for a duty cycle.

    The duty's mean wheel torque fixes the traction demand as a share of
    vehicle weight, capped at the worst-case adhesion ``mu``. An axle motor
    carries that share of its axle load; a wheel motor carries it on the
    most heavily loaded wheel under the worst case, and never less than its
    share of a symmetric axle. ``torque_ceiling`` bounds the motor-shaft
    torque (or the wheel torque when no reduction is given).
    """
    if not duty.segments:
        raise ValueError('duty cycle is empty')
    r = geom.rolling_radius
    W = mass * G
    flat = wheel_load_distribution(mass, geom, 0.0, worst_case.longitudinal_slope)
    worst = wheel_load_distribution(mass, geom, worst_case.side_slope, worst_case.longitudinal_slope)
    axle_load = max(flat[0] + flat[1], flat[2] + flat[3])
    wheel_load = max(max(worst), axle_load / 2)

    peak_share = 0.0
    peak_power_share = 0.0
    for seg in duty.segments:
        omega = seg.vehicle_speed / 3.6 / r
        force = driven_wheels * abs(seg.wheel_torque) / r
        share = min(force / W, worst_case.mu)
        peak_share = max(peak_share, share)
        peak_power_share = max(peak_power_share, share * omega)

    axle_torque = peak_share * axle_load * r
    axle_power = peak_power_share * axle_load * r
    wheel_torque_r = peak_share * wheel_load * r
    wheel_power = peak_power_share * wheel_load * r
    factor = wheel_load / (axle_load / 2)

    if concept is DriveConcept.AXLE_MODULE:
        motors, t_rating, p_rating = 2, axle_torque, axle_power
    elif concept is DriveConcept.WHEEL_MODULE:
        motors, t_rating, p_rating = 4, wheel_torque_r, wheel_power
    else:
        raise ValueError('size_motors needs a pure concept')
    motor_torque = None
    if reduction is not None:
        motor_torque = t_rating / (reduction * gear_efficiency)
    if torque_ceiling is not None:
        check = motor_torque if motor_torque is not None else t_rating
        if check > torque_ceiling:
            raise InfeasibleDuty(f'required torque {check:.1f} Nm exceeds ceiling {torque_ceiling:.1f} Nm')
    return SizingResult(concept, motors, t_rating, p_rating, axle_torque, factor, motor_torque)


# DC bus

@dataclass(frozen=True)
class DcBus:
    buffer_capacity: float = 2e6   # J
    buffer_state: float = 1e6      # J
    voltage_class: float = 700.0   # V, reporting only
    max_source_power: float = 250e3  # W

    def __post_init__(self):
        if self.buffer_capacity < 0 or not 0 <= self.buffer_state <= self.buffer_capacity:
            raise ValueError('need 0 <= buffer_state <= buffer_capacity')
        if self.max_source_power < 0:
            raise ValueError('max_source_power must be >= 0')


def dc_bus_step(bus: DcBus, source_power: float, sink_powers: Sequence[float], dt: float):
    """Integrate the buffer over one step.

    Returns ``(bus', residual)`` where residual (W) is the part of the net
    power the buffer could not absorb (positive = overflow). Raises
    BusUnderrun if demand exceeds source plus stored energy.
    """
    if dt <= 0:
        raise ValueError('dt must be > 0')
    net = source_power - math.fsum(sink_powers)
    raw = bus.buffer_state + net * dt
    if raw < 0 and raw < -1e-9 * max(1.0, abs(net) * dt):
        raise BusUnderrun(f'bus short by {-raw:.1f} J', deficit=-raw / dt)
    clamped = min(max(raw, 0.0), bus.buffer_capacity)
    return replace(bus, buffer_state=clamped), (raw - clamped) / dt


@dataclass
class ThermalBudget:
    """Overload credit: drains while above the continuous rating, refills below it."""
    capacity: float
    credit: float
    refill_rate: float = 0.5  # fraction of the power margin credited back

    def update(self, power: float, continuous_power: float, dt: float):
        excess = abs(power) - continuous_power
        if excess > 0:
            self.credit = max(0.0, self.credit - excess * dt)
        else:
            self.credit = min(self.capacity, self.credit - excess * self.refill_rate * dt)

    @property
    def mode(self) -> TorqueMode:
        return TorqueMode.PEAK if self.credit > 0 else TorqueMode.CONTINUOUS
