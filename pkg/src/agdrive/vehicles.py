"""Preset vehicles: a 30 t self-propelled harvester with wheel or axle modules.

Tire and controller numbers are plausible guesses for this class, not
measured data; the shipped YAML files under ``data/vehicles`` mirror them.
"""
from __future__ import annotations

from .kinematics import DriveConcept, SteeringMode, VehicleGeometry
from .modctrl import ControllerParams, DriveModule, ModuleKind, PIGains
from .powertrain import AXLE_MOTOR, WHEEL_MOTOR, DcBus
from .simulator import TireSpec, VehicleConfig
from .transmission import PlanetaryStage, RangeBox

HARVESTER_GEOMETRY = VehicleGeometry(wheelbase=3.8, track_width=2.5, rolling_radius=0.78, cog_height=1.5,
                                     cog_longitudinal_offset=1.9)
HARVESTER_MASS = 30000.0


def default_rangebox() -> RangeBox:
    """Shared 15/147 first stage; 12/150 for range A (145.8:1) and 47/145 for range B (44.1:1)."""
    return RangeBox(PlanetaryStage(15, 147), PlanetaryStage(12, 150), PlanetaryStage(47, 145))


def wheel_module_vehicle(steering_mode: SteeringMode = SteeringMode.FOUR_WHEEL_SYMMETRIC) -> VehicleConfig:
    modules = tuple(DriveModule(i + 1, ModuleKind.WHEEL_MODULE, (i,), WHEEL_MOTOR, default_rangebox())
                    for i in range(4))
    return VehicleConfig(HARVESTER_GEOMETRY, HARVESTER_MASS, DriveConcept.WHEEL_MODULE, modules,
                         tire=TireSpec(), dc_bus=DcBus(), steering_mode=steering_mode, name='wheel-4ws')


def axle_module_vehicle() -> VehicleConfig:
    params = ControllerParams(gains=PIGains(kp=800.0, ki=400.0))
    modules = (DriveModule(1, ModuleKind.AXLE_MODULE, (0, 1), AXLE_MOTOR, default_rangebox(), params=params),
               DriveModule(2, ModuleKind.AXLE_MODULE, (2, 3), AXLE_MOTOR, default_rangebox(), params=params))
    return VehicleConfig(HARVESTER_GEOMETRY, HARVESTER_MASS, DriveConcept.AXLE_MODULE, modules,
                         tire=TireSpec(), dc_bus=DcBus(), steering_mode=SteeringMode.FRONT_ONLY,
                         name='axle-front-steer')
