"""Regenerate the shipped field duty cycle CSV (deterministic, seed 0)."""
import argparse
from pathlib import Path

import agdrive
from agdrive.duty import field_cycle, write_duty_csv

DEFAULT = Path(agdrive.__file__).parent / 'data' / 'field_cycle.csv'


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument('--seed', type=int, default=0)
    ap.add_argument('--output', type=Path, default=DEFAULT)
    args = ap.parse_args()
    duty = field_cycle(args.seed)
    with open(args.output, 'w', newline='') as fh:
        write_duty_csv(duty, fh)
    print(f'{args.output}: {len(duty.segments)} segments, {duty.total_time:.0f} s, '
          f'reverse {duty.reverse_fraction:.3f}')


if __name__ == '__main__':
    main()
