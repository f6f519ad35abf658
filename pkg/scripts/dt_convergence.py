"""Final speed of a torque-loop acceleration under successive step halving."""
from dataclasses import replace

from agdrive.config import parse_scenario, parse_vehicle
from agdrive.simulator import run_scenario


def main():
    v = parse_vehicle('wheel_4ws')
    base = parse_scenario('torque_accel')
    prev = None
    for dt in (0.01, 0.005, 0.0025, 0.00125):
        _, m = run_scenario(v, replace(base, dt=dt))
        note = '' if prev is None else f'  change {abs(m.final_speed_kmh - prev) / prev:.3%}'
        print(f'dt {dt:<8g} final {m.final_speed_kmh:.4f} km/h{note}')
        prev = m.final_speed_kmh


if __name__ == '__main__':
    main()
