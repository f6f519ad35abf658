import argparse
import io
import re

import numpy as np
import pytest

from agdrive import cli
from agdrive.config import DATA_DIR, parse_config, parse_scenario, parse_vehicle
from agdrive.duty import LoadSpectrumSpec, exceedance_at, sample_load_spectrum, write_samples_csv
from agdrive.modctrl import write_frame_log
from agdrive.simulator import compute_metrics, run_world


def run(argv, capsys):
    rc = cli.main(argv)
    out = capsys.readouterr()
    return rc, out.out, out.err


def subparsers():
    p = cli.build_parser()
    action = next(a for a in p._actions if isinstance(a, argparse._SubParsersAction))
    return p, action.choices


@pytest.mark.parametrize('name', ['size', 'simulate', 'compare', 'spectrum'])
def test_help_lists_every_flag(name):
    _, subs = subparsers()
    sp = subs[name]
    text = sp.format_help()
    for a in sp._actions:
        for flag in a.option_strings:
            assert flag in text
        if a.option_strings and a.help is not argparse.SUPPRESS and '-h' not in a.option_strings:
            assert a.help


def test_top_level_help(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(['--help'])
    assert e.value.code == 0
    out = capsys.readouterr().out
    for name in ('size', 'simulate', 'compare', 'spectrum'):
        assert name in out


@pytest.mark.parametrize('argv', [['size', '--bogus'], ['warp'], [], ['size', '--mu', 'x']])
def test_bad_arguments_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(argv)
    assert e.value.code == cli.EXIT_VALIDATION


def test_invalid_value_exit_1(capsys):
    rc, _, err = run(['size', '--mu', '-1'], capsys)
    assert rc == cli.EXIT_VALIDATION and 'mu' in err


def field(text, key):
    m = re.search(rf'^{re.escape(key)}[^:]*: (\S+)', text, re.M)
    return float(m.group(1))


def test_size_worked_example(capsys):
    rc, out, _ = run(['size'], capsys)
    assert rc == 0
    assert field(out, 'wheel_rpm_field') == pytest.approx(41, abs=1)
    assert field(out, 'wheel_rpm_road') == pytest.approx(136, abs=1)
    assert field(out, 'reduction_field') == pytest.approx(146, rel=0.02)
    assert field(out, 'reduction_road') == pytest.approx(44, rel=0.02)
    assert field(out, 'range_spread') == pytest.approx(3.3, abs=0.05)
    assert 'seed: 0' in out
    assert '1: stage1 15/147, range A 12/150' in out
    assert re.search(r'^wheel: 4 motors, .* overdimensioning 1\.19\d$', out, re.M)
    assert re.search(r'^axle: 2 motors, ', out, re.M)
    assert 'cost_ratio: 4.5' in out
    assert 'calibrated defaults, not predictions: ok' in out


def test_size_field_robot(capsys):
    rc, out, _ = run(['size', '--no-road'], capsys)
    assert rc == 0
    assert 'reduction_road' not in out
    assert 'recommendation: single range' in out
    assert 'single fixed reduction may be sufficient' in out


def test_size_25_kmh_road(capsys):
    rc, out, _ = run(['size', '--road-speed', '25', '--min-field-speed', '5'], capsys)
    assert rc == 0
    assert field(out, 'speed_spread') == pytest.approx(5.0)
    assert 'may be achievable with a single range' in out


def test_size_40_kmh_needs_two_ranges(capsys):
    _, out, _ = run(['size'], capsys)
    assert field(out, 'speed_spread') == pytest.approx(13.33, abs=0.01)
    assert 'recommendation: two ranges' in out


def test_size_output_file(tmp_path, capsys):
    target = tmp_path / 'nested' / 'report.txt'
    rc, out, _ = run(['size', '--output', str(target)], capsys)
    assert rc == 0 and target.read_text() == out


SIM_FILES = ('trace.csv', 'frames.csv', 'metrics.txt', 'metrics.kv')


def test_simulate_deterministic_and_matches_library(tmp_path, capsys):
    example = str(DATA_DIR / 'example.yaml')
    a, b = tmp_path / 'a' / 'deep', tmp_path / 'b'
    assert run(['simulate', '--config', example, '--output-dir', str(a)], capsys)[0] == 0
    assert run(['simulate', '--config', example, '--output-dir', str(b)], capsys)[0] == 0
    for name in SIM_FILES:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    vehicle, scenario = parse_config(example)
    world, trace = run_world(vehicle, scenario)
    metrics = compute_metrics(trace, scenario)
    frames = io.StringIO()
    write_frame_log(world.bus.log, frames)
    assert (a / 'trace.csv').read_text() == trace.to_csv()
    assert (a / 'frames.csv').read_text() == frames.getvalue()
    assert (a / 'metrics.kv').read_text() == metrics.to_keyvalue()
    assert (a / 'metrics.txt').read_text() == metrics.to_text()


def test_simulate_overrides(tmp_path, capsys):
    rc, out, _ = run(['simulate', '--vehicle', 'wheel_4ws', '--scenario', 'accel', '--seed', '7', '--dt', '0.01',
                      '--output-dir', str(tmp_path)], capsys)
    assert rc == 0 and 'seed                7' in out
    rows = (tmp_path / 'trace.csv').read_text().splitlines()
    t = [float(r.split(',')[0]) for r in rows[1:3]]
    assert t[1] - t[0] == pytest.approx(20 * 0.01)


def test_simulate_strict_fault_exit_2(tmp_path, capsys):
    argv = ['simulate', '--vehicle', 'wheel_4ws', '--scenario', 'limp_flat', '--output-dir', str(tmp_path)]
    rc, _, err = run(argv + ['--strict'], capsys)
    assert rc == cli.EXIT_RUNTIME and 'fault event' in err
    assert (tmp_path / 'trace.csv').exists()
    assert run(argv, capsys)[0] == 0


def test_simulate_missing_inputs(tmp_path, capsys):
    assert run(['simulate', '--output-dir', str(tmp_path)], capsys)[0] == cli.EXIT_VALIDATION
    rc, _, err = run(['simulate', '--vehicle', 'wheel_4ws', '--scenario', 'nope', '--output-dir', str(tmp_path)],
                     capsys)
    assert rc == cli.EXIT_IO and 'nope' in err


def test_unwritable_output_dir(tmp_path, capsys):
    blocker = tmp_path / 'file'
    blocker.write_text('x')
    rc, _, err = run(['spectrum', '--n', '100', '--output-dir', str(blocker / 'sub')], capsys)
    assert rc == cli.EXIT_IO
    assert str(blocker) in err


def test_atomic_write_leaves_no_temp(tmp_path):
    cli.atomic_write(tmp_path / 'x.csv', 'a\n')
    cli.atomic_write(tmp_path / 'x.csv', 'b\n')
    assert [p.name for p in tmp_path.iterdir()] == ['x.csv']
    assert (tmp_path / 'x.csv').read_text() == 'b\n'


def test_spectrum_matches_library(tmp_path, capsys):
    rc, out, _ = run(['spectrum', '--n', '20000', '--seed', '3', '--output-dir', str(tmp_path)], capsys)
    assert rc == 0
    spec = LoadSpectrumSpec(seed=3)
    samples = sample_load_spectrum(spec, 20000)
    buf = io.StringIO()
    write_samples_csv(samples, buf)
    assert (tmp_path / 'samples.csv').read_text() == buf.getvalue()
    rows = (tmp_path / 'exceedance.csv').read_text().splitlines()
    assert rows[0] == 'load,fraction'
    levels = np.array([float(r.split(',')[0]) for r in rows[1:]])
    fracs = np.array([float(r.split(',')[1]) for r in rows[1:]])
    assert np.array_equal(fracs, exceedance_at(samples, levels))
    assert levels[-1] == 450.0
    assert f'max: {float(samples.max())!r}' in out


def test_spectrum_default_tail(tmp_path, capsys):
    rc, out, _ = run(['spectrum', '--output-dir', str(tmp_path)], capsys)
    assert rc == 0
    n = 1_000_000
    p = 0.001
    assert field(out, 'exceedance_at_0.9_peak') <= p + 2.576 * np.sqrt(p * (1 - p) / n)
    assert field(out, 'max') <= 450.0
    assert run(['spectrum', '--n', '0', '--output-dir', str(tmp_path)], capsys)[0] == cli.EXIT_VALIDATION


def test_compare_qualitative_golden(tmp_path, capsys, golden_dir):
    rc, out, _ = run(['compare', '--qualitative-only', '--output-dir', str(tmp_path)], capsys)
    assert rc == 0
    golden = (golden_dir / 'table1.tsv').read_bytes()
    assert out.encode() == golden
    assert (tmp_path / 'table1.tsv').read_bytes() == golden
    assert not (tmp_path / 'quantitative.csv').exists()
    rows = {r.split('\t')[0]: r.split('\t')[1:] for r in out.splitlines()[1:]}
    assert rows['Controllability (degrees of freedom)'] == ['5', '3']
    assert rows['Freedom for vehicle design'] == ['5', '3']


def test_compare_quantitative(tmp_path, capsys):
    rc, out, _ = run(['compare', '--scenarios', 'limp_steep', '--output-dir', str(tmp_path)], capsys)
    assert rc == 0
    lines = (tmp_path / 'quantitative.csv').read_text().splitlines()
    header = lines[0].split(',')
    recs = [dict(zip(header, l.split(','))) for l in lines[1:]]
    by = {r['concept']: r for r in recs}
    assert by['wheel']['limp_home'] == 'Feasible' and by['wheel']['target_reached'] == 'yes'
    assert by['axle']['limp_home'] == 'Infeasible' and by['axle']['target_reached'] == 'no'
    assert out.endswith((tmp_path / 'quantitative.csv').read_text())


def test_compare_library_composition():
    m = cli.compare(parse_vehicle('wheel_4ws'), parse_vehicle('axle_front'), [parse_scenario('limp_flat')])
    assert m.rows == cli.TABLE1
    assert [r['limp_home'] for r in m.quantitative] == ['Feasible', 'Feasible']
