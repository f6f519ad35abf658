"""Headland turns at a commanded 6 m radius: four-wheel vs front-only steering."""
import math

from agdrive.config import parse_scenario, parse_vehicle
from agdrive.simulator import run_scenario


def main():
    sc = parse_scenario('headland_turn')
    for vname in ('wheel_4ws', 'axle_front'):
        v = parse_vehicle(vname)
        _, m = run_scenario(v, sc)
        print(f'{vname:11s} {v.steering_mode.value:22s} radius {m.min_turning_radius:.3f} m '
              f'energy {m.total_energy_wh:.1f} Wh')
    print(f'front-only reference point radius expected {math.hypot(6.0, v.geometry.wheelbase / 2):.3f} m')


if __name__ == '__main__':
    main()
