import io
import math
import time
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from agdrive.errors import BrakeOverload, InvalidToothCounts, NoSolution
from agdrive.transmission import (Arrangement, BrakeState, FinalDriveVariant, PlanetaryStage, RangeBox, RangeState,
                                  ToothConstraints, design_rangebox, park_reaction, planetary_ratio, range_spread,
                                  rangebox_efficiency, rangebox_ratio, rangebox_state, read_candidates_csv,
                                  required_reduction, speed_ratio_spread, synthesize_tooth_counts,
                                  synthesize_two_stage, wheel_rpm, wheel_torque, write_candidates_csv)

C, O = BrakeState.CLOSED, BrakeState.OPEN


def _willis():
    # omega_s*Zs + omega_r*Zr = (Zs + Zr)*omega_c, solved once symbolically
    ws, wr, wc = sympy.symbols('ws wr wc', real=True)
    zs, zr = sympy.symbols('zs zr', positive=True)
    eq = sympy.Eq(ws * zs + wr * zr, (zs + zr) * wc)
    ring_fixed = sympy.solve(eq.subs({wr: 0, wc: 1}), ws)[0]      # sun speed per unit carrier speed
    carrier_fixed = sympy.solve(eq.subs({wc: 0, wr: 1}), ws)[0]   # sun speed per unit ring speed
    return sympy.lambdify((zs, zr), ring_fixed, 'sympy'), sympy.lambdify((zs, zr), carrier_fixed, 'sympy')


WILLIS_RING_FIXED, WILLIS_CARRIER_FIXED = _willis()


def as_fraction(expr):
    r = sympy.Rational(expr)
    return Fraction(int(r.p), int(r.q))


def test_willis_oracle_exhaustive_12_to_150():
    n = 0
    for zs in range(12, 151):
        for zr in range(zs + 1, 151):
            for arr, oracle in ((Arrangement.SUN_IN_CARRIER_OUT_RING_FIXED, WILLIS_RING_FIXED),
                                (Arrangement.SUN_IN_RING_OUT_CARRIER_FIXED, WILLIS_CARRIER_FIXED)):
                stage = PlanetaryStage(zs, zr, planet_count=1, arrangement=arr)
                expected = as_fraction(oracle(sympy.Integer(zs), sympy.Integer(zr)))
                assert planetary_ratio(stage) == expected
                n += 1
    assert n == 2 * sum(150 - zs for zs in range(12, 151))


def test_ratio_examples():
    assert planetary_ratio(PlanetaryStage(20, 80, planet_count=4)) == 5
    assert planetary_ratio(PlanetaryStage(25, 75, planet_count=4)) == 4
    assert planetary_ratio(None) == 1
    assert planetary_ratio(PlanetaryStage(20, 80, 4, Arrangement.SUN_IN_RING_OUT_CARRIER_FIXED)) == -4


@pytest.mark.parametrize('zs, zr, n', [(11, 80, 1), (20, 20, 1), (20, 19, 1), (25, 75, 3), (20, 80, 0)])
def test_invalid_tooth_counts(zs, zr, n):
    with pytest.raises(InvalidToothCounts):
        PlanetaryStage(zs, zr, planet_count=n)


def test_invalid_mesh_efficiency():
    with pytest.raises(InvalidToothCounts):
        PlanetaryStage(20, 80, mesh_efficiency=0.8)


def box(b1=C, b2=O, limit=math.inf):
    return RangeBox(PlanetaryStage(12, 60), PlanetaryStage(12, 108), PlanetaryStage(12, 288), b1, b2, limit)


@pytest.mark.parametrize('b1, b2, state', [(C, O, RangeState.RANGE_A), (O, C, RangeState.RANGE_B),
                                           (C, C, RangeState.PARKED), (O, O, RangeState.FREE_WHEEL)])
def test_brake_truth_table(b1, b2, state):
    assert rangebox_state(box(b1, b2)) is state


def test_rangebox_ratios():
    assert rangebox_ratio(box(C, O)) == pytest.approx(60.0, rel=1e-15)
    assert rangebox_ratio(box(O, C)) == pytest.approx(150.0, rel=1e-15)
    assert rangebox_ratio(box(C, C)) is RangeState.PARKED
    assert rangebox_ratio(box(O, O)) is RangeState.FREE_WHEEL
    assert wheel_torque(box(O, O), 300.0) == 0.0
    assert wheel_torque(box(C, C), 300.0) == 0.0
    assert rangebox_efficiency(box(O, O)) == 0.0


def test_select_matches_state():
    for s in RangeState:
        assert rangebox_state(box().select(s)) is s


def test_wheel_torque_losses():
    b = box()
    eta = 0.985 ** 4
    assert rangebox_efficiency(b) == pytest.approx(eta)
    assert wheel_torque(b, 100.0, 10.0) == pytest.approx(6000 * eta)
    # regenerating: the wheel must supply more than the ideal torque
    assert wheel_torque(b, -100.0, 10.0) == pytest.approx(-6000 / eta)


def test_park_reaction_limit():
    b = box(C, C, limit=10e3)
    assert park_reaction(b, 9e3) == pytest.approx(9e3)
    with pytest.raises(BrakeOverload):
        park_reaction(b, 11e3)
    with pytest.raises(BrakeOverload):
        park_reaction(b, 0.0, motor_torque=200.0)  # 200 Nm x 60 reflected on the brakes
    with pytest.raises(ValueError):
        park_reaction(box(C, O), 1.0)


def test_final_drive_variant():
    FinalDriveVariant(1, 1.0)
    with pytest.raises(ValueError):
        FinalDriveVariant(6, 2.0)
    with pytest.raises(ValueError):
        FinalDriveVariant(2, 0.5)


def test_speed_and_reduction_calculators():
    assert wheel_rpm(12, 0.78) == pytest.approx(40.8, abs=0.05)
    assert wheel_rpm(40, 0.78) == pytest.approx(136.0, abs=0.05)
    assert wheel_rpm(0, 0.78) == 0.0
    assert required_reduction(6000, 40.8) == pytest.approx(147.0, abs=0.1)
    assert required_reduction(6000, 40.8) == pytest.approx(146, rel=0.02)
    assert required_reduction(6000, 136.0) == pytest.approx(44.1, abs=0.05)
    assert range_spread([147.0, 44.1]) == pytest.approx(3.33, abs=0.005)
    assert speed_ratio_spread(3, 40) == pytest.approx(13.33, abs=0.005)
    assert speed_ratio_spread(5, 25) == 5.0
    assert speed_ratio_spread(7, 7) == 1.0
    with pytest.raises(ValueError):
        speed_ratio_spread(0, 10)
    with pytest.raises(ValueError):
        required_reduction(6000, 0)


def test_synthesis_examples():
    # 20 + 80 = 100 teeth: assembles with 4 planets, not with 3
    c4 = ToothConstraints(sun_min=15, sun_max=30, ring_max=120, planet_count=4)
    hits = synthesize_tooth_counts(5.0, 0.01, c4)
    assert (20, 80) in {(h.stage.sun_teeth, h.stage.ring_teeth) for h in hits}
    assert hits[0].error == 0.0
    c3 = ToothConstraints(sun_min=15, sun_max=30, ring_max=120)
    assert (20, 80) not in {(h.stage.sun_teeth, h.stage.ring_teeth) for h in synthesize_tooth_counts(5.0, 0.01, c3)}
    with pytest.raises(NoSolution):
        synthesize_tooth_counts(1.0, 0.01)
    exact3 = {(h.stage.sun_teeth, h.stage.ring_teeth) for h in synthesize_tooth_counts(4.0, 0.0)}
    assert (25, 75) not in exact3  # 100 teeth cannot be split over 3 planets
    exact4 = {(h.stage.sun_teeth, h.stage.ring_teeth)
              for h in synthesize_tooth_counts(4.0, 0.0, ToothConstraints(planet_count=4))}
    assert (25, 75) in exact4


def brute_force_single(target, tol, c):
    target, tol = Fraction(target), Fraction(tol)
    out = set()
    for zs in range(c.sun_min, c.sun_max + 1):
        for zr in range(zs + 1, c.ring_max + 1):
            if (zs + zr) % c.planet_count or (c.coaxial and (zr - zs) % 2):
                continue
            if abs(Fraction(zs + zr, zs) - target) <= tol * target:
                out.add((zs, zr))
    return out


@settings(max_examples=40, deadline=None)
@given(st.floats(2.2, 12.0), st.sampled_from([0.0, 0.005, 0.02, 0.05]),
       st.sampled_from([2, 3, 4, 5]), st.booleans())
def test_single_stage_matches_brute_force(target, tol, planets, coaxial):
    c = ToothConstraints(sun_max=40, ring_max=120, planet_count=planets, coaxial=coaxial)
    expected = brute_force_single(target, tol, c)
    if not expected:
        with pytest.raises(NoSolution):
            synthesize_tooth_counts(target, tol, c)
        return
    hits = synthesize_tooth_counts(target, tol, c)
    assert {(h.stage.sun_teeth, h.stage.ring_teeth) for h in hits} == expected
    errors = [h.error for h in hits]
    assert errors == sorted(errors)


def brute_force_two_stage(target, tol, c):
    """Independent exhaustive loop over every pair of admissible stages, in integer arithmetic."""
    stages = [(zs, zr) for zs in range(c.sun_min, c.sun_max + 1) for zr in range(zs + 1, c.ring_max + 1)
              if (zs + zr) % c.planet_count == 0 and (not c.coaxial or (zr - zs) % 2 == 0)]
    t, e = Fraction(target), Fraction(tol)
    lo, hi = t * (1 - e), t * (1 + e)
    out = set()
    for s1, r1 in stages:
        for s2, r2 in stages:
            num, den = (s1 + r1) * (s2 + r2), s1 * s2
            if lo * den <= num <= hi * den:
                out.add((s1, r1, s2, r2))
    return out


@pytest.mark.parametrize('target', [60.0, 150.0])
def test_two_stage_matches_brute_force(target):
    c = ToothConstraints()
    got = {h.key for h in synthesize_two_stage(target, 0.05, c)}
    assert got == brute_force_two_stage(target, 0.05, c)


def test_two_stage_error_bound_and_order():
    hits = synthesize_two_stage(146.0, 0.01)
    for h in hits:
        ratio = planetary_ratio(h.stage1) * planetary_ratio(h.stage2)
        assert abs(ratio - 146) <= Fraction(146) * Fraction(0.01)
    assert [h.error for h in hits] == sorted(h.error for h in hits)


def test_design_rangebox_finds_shipped_box():
    t0 = time.perf_counter()
    designs = design_rangebox(147.0, 44.1, 0.01)
    assert time.perf_counter() - t0 < 2.0
    keys = [(d.box.stage1.sun_teeth, d.box.stage1.ring_teeth, d.box.stage2_range_a.sun_teeth,
             d.box.stage2_range_a.ring_teeth, d.box.stage2_range_b.sun_teeth, d.box.stage2_range_b.ring_teeth)
            for d in designs]
    assert (15, 147, 12, 150, 47, 145) in keys
    for d in designs:
        assert d.error_a <= 0.01 and d.error_b <= 0.01


def test_candidates_csv_round_trip():
    hits = synthesize_tooth_counts(5.0, 0.02)
    buf = io.StringIO()
    write_candidates_csv(hits, buf)
    assert buf.getvalue().splitlines()[0] == 'sun,ring,planets,ratio,error'
    buf.seek(0)
    assert read_candidates_csv(buf) == [h.row for h in hits]


teeth = st.integers(12, 150)


@settings(max_examples=200, deadline=None)
@given(teeth, teeth, teeth, teeth, teeth, teeth)
def test_range_quotient_cancels_stage1(a, b, c, d, e, f):
    s1, sa, sb = sorted((a, b)), sorted((c, d)), sorted((e, f))
    if s1[0] == s1[1] or sa[0] == sa[1] or sb[0] == sb[1]:
        return
    mk = lambda p: PlanetaryStage(p[0], p[1], planet_count=1)
    rb = RangeBox(mk(s1), mk(sa), mk(sb))
    qa = rb.range_ratio(RangeState.RANGE_A) / rb.range_ratio(RangeState.RANGE_B)
    assert qa == pytest.approx(float(planetary_ratio(mk(sa)) / planetary_ratio(mk(sb))), rel=1e-12)
