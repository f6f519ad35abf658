import math
from dataclasses import replace

import pytest
import yaml
from hypothesis import given, settings, strategies as st

from agdrive.config import (DATA_DIR, parse_baseline, parse_config, parse_scenario, parse_text, parse_vehicle,
                            scenario_dict, serialize, vehicle_dict)
from agdrive.errors import ConfigError
from agdrive.powertrain import HydrostaticBaseline
from agdrive.simulator import Maneuver, Scenario, TerrainSegment
from agdrive.vehicles import axle_module_vehicle, wheel_module_vehicle

WHEEL_YAML = (DATA_DIR / 'vehicles' / 'wheel_4ws.yaml').read_text()


def test_example_config_is_the_reference_vehicle():
    vehicle, scenario = parse_config(DATA_DIR / 'example.yaml')
    assert vehicle == wheel_module_vehicle()
    assert scenario.name == 'headland_turn'
    assert [m.turn_radius for m in scenario.maneuvers if m.turn_radius is not None] == [6.0]


def test_shipped_axle_vehicle():
    assert parse_vehicle('axle_front') == axle_module_vehicle()


@pytest.mark.parametrize('name', sorted(p.stem for p in (DATA_DIR / 'scenarios').glob('*.yaml')))
def test_shipped_scenarios_parse(name):
    sc = parse_scenario(name)
    assert sc.name == name and sc.dt == 0.005


def test_negative_mass_names_field_and_line():
    text = WHEEL_YAML.replace('mass: 30000', 'mass: -5')
    line = next(i + 1 for i, l in enumerate(text.splitlines()) if 'mass: -5' in l)
    with pytest.raises(ConfigError) as e:
        parse_text(text, 'bad.yaml')
    assert e.value.path == 'vehicle.mass'
    assert e.value.line == line
    assert str(e.value).startswith(f'bad.yaml:{line}: vehicle.mass: ')


def test_unknown_key_rejected():
    text = WHEEL_YAML.replace('mass: 30000', 'mass: 30000\n  colour: green')
    with pytest.raises(ConfigError) as e:
        parse_text(text)
    assert 'colour' in str(e.value)


def test_wrong_type_rejected():
    text = WHEEL_YAML.replace('mass: 30000', 'mass: heavy')
    with pytest.raises(ConfigError) as e:
        parse_text(text)
    assert e.value.path == 'vehicle.mass'


def test_unknown_wheel_and_enum():
    with pytest.raises(ConfigError):
        parse_text(WHEEL_YAML.replace('[RR]', '[XX]'))
    with pytest.raises(ConfigError):
        parse_text(WHEEL_YAML.replace('four_wheel_symmetric', 'crab'))


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as e:
        parse_text('vehicle: {mass: [1, 2\n', 'broken.yaml')
    assert e.value.line is not None


def test_round_trip_reference_configs():
    for v in (wheel_module_vehicle(), axle_module_vehicle()):
        sc = parse_scenario('limp_steep')
        v2, sc2 = parse_text(serialize(v, sc))
        assert v2 == v and sc2 == sc


@settings(max_examples=30, deadline=None)
@given(mass=st.floats(5000, 60000), speed=st.floats(0.5, 40), radius=st.floats(6, 200),
       side=st.floats(-20, 20), seed=st.integers(0, 2 ** 31), dt=st.sampled_from([0.001, 0.005, 0.01]))
def test_round_trip_property(mass, speed, radius, side, seed, dt):
    v = replace(wheel_module_vehicle(), mass=mass)
    sc = Scenario('p', 10.0, dt=dt, seed=seed, terrain=(TerrainSegment(side_slope_deg=side),),
                  maneuvers=(Maneuver(0.0, speed=speed), Maneuver(1.0, turn_radius=radius)))
    v2, sc2 = parse_text(serialize(v, sc))
    assert v2 == v and sc2 == sc
    assert yaml.safe_load(serialize(v2, sc2)) == {'vehicle': vehicle_dict(v), 'scenario': scenario_dict(sc)}


def test_search_path(tmp_path, monkeypatch):
    (tmp_path / 'mine.yaml').write_text(serialize(axle_module_vehicle()))
    monkeypatch.setenv('AGDRIVE_CONFIG_PATH', str(tmp_path))
    assert parse_vehicle('mine') == axle_module_vehicle()
    with pytest.raises(FileNotFoundError):
        parse_vehicle('nowhere')


def test_sections_by_reference(tmp_path):
    (tmp_path / 'run.yaml').write_text('vehicle: axle_front\nscenario: limp_flat\n')
    v, sc = parse_config(tmp_path / 'run.yaml')
    assert v == axle_module_vehicle() and sc.name == 'limp_flat'


def test_hydrostatic_section(tmp_path):
    assert parse_baseline(DATA_DIR / 'example.yaml') == HydrostaticBaseline()
    p = tmp_path / 'h.yaml'
    p.write_text('vehicle: wheel_4ws\nhydrostatic:\n  speed_loss: 0.03\n')
    b = parse_baseline(p)
    assert b.speed_loss == 0.03 and b.torque_loss == HydrostaticBaseline().torque_loss
    p.write_text('vehicle: wheel_4ws\nhydrostatic:\n  leak: 1\n')
    with pytest.raises(ConfigError):
        parse_baseline(p)


def test_infinite_radius_serializes():
    sc = Scenario('s', 5.0, maneuvers=(Maneuver(0.0, turn_radius=math.inf),))
    _, sc2 = parse_text(serialize(wheel_module_vehicle(), sc))
    assert sc2.maneuvers[0].turn_radius == math.inf
