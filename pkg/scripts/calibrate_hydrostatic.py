"""Refit the hydrostatic loss coefficients and print the calibration report.

    python scripts/calibrate_hydrostatic.py [--cycle-delta 0.25]

The shipped defaults in ``HydrostaticBaseline`` are this fit, rounded.
"""
import argparse

from agdrive.duty import calibration_report, fit_hydrostatic
from agdrive.powertrain import HydrostaticBaseline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument('--cycle-delta', type=float, default=0.25, help='target cycle-weighted delta')
    args = ap.parse_args()
    fit = fit_hydrostatic(args.cycle_delta)
    print('fitted:', {k: round(getattr(fit, k), 6)
                      for k in ('const_loss', 'speed_loss', 'torque_loss', 'power_loss')})
    print(calibration_report(hydrostatic=fit).to_text())
    print('shipped defaults:')
    print(calibration_report(hydrostatic=HydrostaticBaseline()).to_text())


if __name__ == '__main__':
    main()
