"""Fail the left-rear module on flat and steep ground for both concepts.

Prints the static feasibility check next to the simulated outcome.
"""
from agdrive.config import parse_scenario, parse_vehicle
from agdrive.simulator import limp_home_for, run_scenario


def main():
    for name in ('limp_flat', 'limp_steep'):
        sc = parse_scenario(name)
        for vname in ('wheel_4ws', 'axle_front'):
            v = parse_vehicle(vname)
            _, m = run_scenario(v, sc)
            print(f'{name:11s} {vname:11s} check={limp_home_for(v, sc)!s:45s} '
                  f'reached={m.target_reached} final={m.final_speed_kmh:.2f} km/h')


if __name__ == '__main__':
    main()
