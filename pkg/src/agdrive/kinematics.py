"""Planar steering geometry and wheel-speed kinematics.

Body frame: origin at the rear-axle centre, x forward, y to the left.
Wheels are always ordered FL, FR, RL, RR. A positive turn radius is a
left turn; ``math.inf`` means straight ahead.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import InconsistentSteering, RadiusTooSmall

WHEELS = ('FL', 'FR', 'RL', 'RR')
FRONT = (0, 1)
REAR = (2, 3)

# wheel axes must meet within this distance (m)
ICR_TOLERANCE = 1e-3


class DriveConcept(enum.Enum):
    AXLE_MODULE = 'axle'
    WHEEL_MODULE = 'wheel'
    MIXED = 'mixed'


class SteeringMode(enum.Enum):
    FRONT_ONLY = 'front_only'
    FOUR_WHEEL_SYMMETRIC = 'four_wheel_symmetric'
    INDEPENDENT_PER_WHEEL = 'independent_per_wheel'


@dataclass(frozen=True)
class VehicleGeometry:
    wheelbase: float
    track_width: float
    rolling_radius: float
    cog_height: float
    cog_longitudinal_offset: float  # from the rear axle

    def __post_init__(self):
        for name in ('wheelbase', 'track_width', 'rolling_radius', 'cog_height'):
            if not getattr(self, name) > 0:
                raise ValueError(f'{name} must be > 0')
        if not 0 <= self.cog_longitudinal_offset <= self.wheelbase:
            raise ValueError('cog_longitudinal_offset must lie within the wheelbase')


@dataclass(frozen=True)
class WheelPose:
    position: tuple[float, float]
    steer_angle: float = 0.0
    angular_speed: float = 0.0

    def check_limit(self, max_steer: float):
        if abs(self.steer_angle) > max_steer:
            raise ValueError(f'steer angle {self.steer_angle:.4f} rad exceeds limit {max_steer:.4f} rad')


def wheel_positions(geom: VehicleGeometry):
    """Contact-patch positions in the body frame, ordered FL, FR, RL, RR."""
    half = geom.track_width / 2
    L = geom.wheelbase
    return ((L, half), (L, -half), (0.0, half), (0.0, -half))


def dof_count(concept: DriveConcept, steering_integrated: bool) -> int:
    """Motion degrees of freedom of a two-axle driveline.

    Each axle module drives one axle (one DoF) and may steer it (one more);
    a wheel module does the same per wheel.
    """
    if concept is DriveConcept.AXLE_MODULE:
        units = 2
    elif concept is DriveConcept.WHEEL_MODULE:
        units = 4
    else:
        raise ValueError(f'dof_count needs a pure concept, got {concept}')
    return units * (2 if steering_integrated else 1)


def icr_for(geom: VehicleGeometry, mode: SteeringMode, turn_radius: float,
            icr_x: Optional[float] = None):
    """Instantaneous centre of rotation for a commanded radius, or None when straight."""
    if math.isinf(turn_radius):
        return None
    if abs(turn_radius) <= geom.track_width / 2:
        raise RadiusTooSmall(
            f'|turn radius| {abs(turn_radius):.3f} m must exceed half track {geom.track_width / 2:.3f} m')
    if mode is SteeringMode.FRONT_ONLY:
        x = 0.0
    elif mode is SteeringMode.FOUR_WHEEL_SYMMETRIC:
        x = geom.wheelbase / 2
    else:
        x = geom.wheelbase / 2 if icr_x is None else icr_x
    return (x, turn_radius)


def _angle_towards(pos, icr):
    # heading perpendicular to the line wheel->ICR, kept within (-pi/2, pi/2]
    dx = pos[0] - icr[0]
    dy = pos[1] - icr[1]
    if dy == 0.0:
        return math.copysign(math.pi / 2, dx)
    return math.atan(-dx / dy)


def ackermann_angles(geom: VehicleGeometry, mode: SteeringMode, turn_radius: float,
                     icr_x: Optional[float] = None):
    """Steer angles (rad) FL, FR, RL, RR placing every wheel axis through one ICR.

    FrontOnly puts the ICR on the rear-axle line, FourWheelSymmetric on the
    mid-wheelbase line. IndependentPerWheel accepts an arbitrary ICR x
    position (mid-wheelbase by default).
    """
    icr = icr_for(geom, mode, turn_radius, icr_x)
    if icr is None:
        return (0.0, 0.0, 0.0, 0.0)
    return tuple(_angle_towards(p, icr) for p in wheel_positions(geom))


def estimate_icr(positions: Sequence[tuple[float, float]], angles: Sequence[float]):
    """Least-squares intersection of the wheel axes.

    Returns ``(icr, residual)`` where residual is the largest distance (m)
    from the estimate to any wheel axis. Parallel axes give ``(None, 0.0)``.
    """
    if max(angles) - min(angles) <= 1e-12:
        return None, 0.0
    a11 = a12 = a22 = b1 = b2 = 0.0
    for (px, py), d in zip(positions, angles):
        hx, hy = math.cos(d), math.sin(d)
        c = hx * px + hy * py
        a11 += hx * hx
        a12 += hx * hy
        a22 += hy * hy
        b1 += hx * c
        b2 += hy * c
    det = a11 * a22 - a12 * a12
    if abs(det) < 1e-15:
        return None, 0.0
    x = (a22 * b1 - a12 * b2) / det
    y = (a11 * b2 - a12 * b1) / det
    residual = max(abs(math.cos(d) * (x - px) + math.sin(d) * (y - py))
                   for (px, py), d in zip(positions, angles))
    return (x, y), residual


def speed_factors(positions, angles, icr, reference_point=(0.0, 0.0)):
    """Per-wheel ground speed along its heading per unit reference-point speed.

    Also returns the yaw rate per unit reference speed (1/m). For a straight
    ICR-free motion every factor is the cosine of the heading error, i.e. 1
    when all wheels point forward.
    """
    if icr is None:
        return tuple(math.cos(d) for d in angles), 0.0
    rx = reference_point[0] - icr[0]
    ry = reference_point[1] - icr[1]
    d_ref = math.hypot(rx, ry)
    if d_ref == 0.0:
        raise InconsistentSteering('reference point coincides with the ICR')
    # yaw rate sign such that the reference point moves forward
    vx_ref = -ry
    omega = (1.0 / d_ref) * (1.0 if vx_ref >= 0 else -1.0)
    factors = []
    for (px, py), d in zip(positions, angles):
        vx = -omega * (py - icr[1])
        vy = omega * (px - icr[0])
        factors.append(vx * math.cos(d) + vy * math.sin(d))
    return tuple(factors), omega


def wheel_speeds_for_icr(geom: VehicleGeometry, poses: Sequence[WheelPose], reference_speed: float,
                         reference_point=(0.0, 0.0), tolerance: float = ICR_TOLERANCE):
    """Angular wheel speeds (rad/s) for slip-free rolling about the common ICR.

    ``reference_speed`` is the speed (m/s) of ``reference_point``. Raises
    InconsistentSteering when the wheel axes miss a common point by more
    than ``tolerance``.
    """
    positions = [p.position for p in poses]
    angles = [p.steer_angle for p in poses]
    icr, residual = estimate_icr(positions, angles)
    if icr is None and max(angles) - min(angles) > 1e-12:
        raise InconsistentSteering('wheel axes are parallel but not aligned')
    if residual > tolerance:
        raise InconsistentSteering(f'wheel axes miss the ICR by {residual:.4g} m')
    factors, _ = speed_factors(positions, angles, icr, reference_point)
    return tuple(f * reference_speed / geom.rolling_radius for f in factors)


def min_turning_radius(geom: VehicleGeometry, mode: SteeringMode, max_steer: float) -> float:
    """Tightest centreline radius reachable with the inner wheel at ``max_steer``."""
    if not 0 <= max_steer < math.pi / 2:
        raise ValueError('max_steer must lie in [0, pi/2)')
    if max_steer == 0:
        return math.inf
    arm = geom.wheelbase if mode is SteeringMode.FRONT_ONLY else geom.wheelbase / 2
    return arm / math.tan(max_steer) + geom.track_width / 2


def steering_mode_allowed(concept: DriveConcept, mode: SteeringMode) -> bool:
    """IndependentPerWheel steering only exists with one steering actuator per wheel."""
    return mode is not SteeringMode.INDEPENDENT_PER_WHEEL or concept is DriveConcept.WHEEL_MODULE
