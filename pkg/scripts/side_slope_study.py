"""Wheel-torque asymmetry on a side slope versus the quasi-static sizing factor."""
import math

from agdrive.config import parse_scenario, parse_vehicle
from agdrive.kinematics import DriveConcept
from agdrive.duty import field_cycle
from agdrive.powertrain import WorstCase, size_motors
from agdrive.simulator import run_scenario


def main():
    v = parse_vehicle('wheel_4ws')
    sc = parse_scenario('side_slope')
    trace, _ = run_scenario(v, sc)
    loads = [trace.array(f'{w}_normal_load')[-1] for w in ('RL', 'RR')]
    sim = max(loads) / (sum(loads) / 2)
    slope = sc.terrain[0].side_slope_deg
    s = size_motors(DriveConcept.WHEEL_MODULE, field_cycle(), WorstCase(math.radians(slope), 0.6),
                    v.mass, v.geometry)
    print(f'side slope {slope:g} deg: simulated rear load ratio {sim:.4f}, '
          f'sizing factor {s.overdimensioning_factor:.4f}')


if __name__ == '__main__':
    main()
