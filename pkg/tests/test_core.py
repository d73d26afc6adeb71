import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from perchsim.core import (
    CATALOG_KEYS,
    G,
    CalibrationSet,
    Circle,
    MassBudget,
    MassProperties,
    PerchSpec,
    Square,
    catalog,
    catalog_perch,
    default_system,
    load_scenario_text,
    parse_quantity,
    validate_config,
)


def test_default_mass_total():
    mass, _, _, _ = default_system()
    assert mass.m_total == pytest.approx(0.1718, abs=1e-9)
    assert mass.m_total == pytest.approx(mass.m_vehicle + mass.m_battery + mass.m_gripper + mass.m_board, abs=1e-9)


def test_default_mass_budget():
    _, budget, _, _ = default_system()
    assert budget.fraction_actuation == 0.44
    assert (budget.fraction_linkage, budget.fraction_grippers) == (0.29, 0.27)


def test_cg_height_puts_axial_zero_at_limit():
    # 0.103 N*m = m g h sin(12.5 deg) solved for h, checked by recomputing the product
    mass, _, _, _ = default_system()
    assert mass.h_cg == pytest.approx(0.28, abs=0.01)
    assert mass.m_total * G * mass.h_cg * math.sin(math.radians(12.5)) == pytest.approx(0.103, rel=1e-12)


def test_default_system_is_referentially_transparent():
    assert default_system() == default_system()


def test_mass_validation():
    with pytest.raises(ValueError):
        MassProperties(m_vehicle=-0.01)
    with pytest.raises(ValueError):
        MassProperties(h_cg=0.0)
    with pytest.raises(ValueError):
        MassBudget(0.5, 0.5, 0.5)


def test_catalog_has_six_unique_perches():
    perches = catalog()
    assert len(perches) == 6 == len(CATALOG_KEYS)
    assert len({p.label for p in perches}) == 6


def test_catalog_wood_40():
    p = catalog_perch("wood-40")
    assert p.cross_section == Circle(0.040)
    assert p.inclination == 0.0


def test_catalog_diamond():
    p = catalog_perch("square-diamond")
    assert p.cross_section == Square(0.030, "diamond")


def test_perch_bounds():
    with pytest.raises(ValueError):
        PerchSpec(Circle(0.2))
    with pytest.raises(ValueError):
        PerchSpec(Circle(0.04), inclination=25.0)
    with pytest.raises(ValueError):
        Square(0.03, "edge")


def test_square_support_function():
    flat = PerchSpec(Square(0.03, "flat"))
    diamond = PerchSpec(Square(0.03, "diamond"))
    assert flat.support(0.0, 1.0) == pytest.approx(0.015)
    assert diamond.support(0.0, 1.0) == pytest.approx(0.015 * math.sqrt(2))


@pytest.mark.parametrize("text,kind,expected", [
    ("40 mm", "length", 0.040),
    ("38.8 g", "mass", 0.0388),
    ("55 Ncm", "torque", 0.55),
    ("12.5 deg", "angle", 12.5),
    (0.82, "velocity", 0.82),
])
def test_parse_quantity(text, kind, expected):
    assert parse_quantity(text, kind) == pytest.approx(expected, rel=1e-12)


def test_parse_quantity_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        parse_quantity("40 mm", "mass")
    with pytest.raises(ValueError):
        parse_quantity(True, "mass")


def test_negative_mass_names_field():
    config, report = validate_config({"mass": {"battery": -0.018}})
    assert config is None
    assert any(path == "mass.battery" for path, _ in report.errors)


def test_catalog_perch_in_config():
    config, report = validate_config({"perch": {"catalog": "wood-40"}})
    assert report.ok
    assert config.perch.cross_section == Circle(0.040)
    assert config.perch.inclination == 0.0


def test_missing_friction_defaults_with_note():
    config, report = validate_config({"perch": {"catalog": "wood-40"}, "approach": {"impact_velocity": 0.5}})
    assert config.perch.friction_coefficient == 0.9
    assert any("friction_coefficient" in n for n in report.notes)


def test_unknown_keys_reported():
    config, report = validate_config({"perch": {"catalog": "wood-40", "colour": "red"}, "extra": 1})
    assert config is not None
    assert set(report.unknown_keys) == {"perch.colour", "extra"}


@pytest.mark.parametrize("raw", [None, [], "text", 3, {"perch": 5}, {"approach": {"impact_velocity": "fast"}},
                                 {"approach": {"impact_velocity": 1.0, "height": 0.1}}])
def test_malformed_input_never_raises(raw):
    config, report = validate_config(raw)
    assert config is None
    assert report.errors


def test_all_violations_reported():
    _, report = validate_config({"mass": {"vehicle": -1, "board": 0}, "perch": {"inclination": 45}})
    paths = {p for p, _ in report.errors}
    assert {"mass.vehicle", "mass.board", "perch.inclination"} <= paths


def test_units_normalized():
    config, _ = validate_config(load_scenario_text(
        "mass:\n  gripper: 38.8 g\nperch:\n  shape: circle\n  diameter: 35 mm\n  inclination: 5 deg\n"
        "approach:\n  height: 50 mm\n"))
    assert config.mass.m_gripper == pytest.approx(0.0388)
    assert config.perch.cross_section.diameter == pytest.approx(0.035)
    assert config.approach.height == pytest.approx(0.05)


@given(
    st.floats(0.01, 0.2), st.floats(0.05, 0.5),
    st.sampled_from(CATALOG_KEYS), st.floats(0.0, 20.0), st.floats(0.1, 1.5),
    st.floats(0.0, 2.9), st.integers(0, 2**31), st.floats(0.0, 60.0),
)
def test_config_round_trip(m_vehicle, h_cg, key, theta, mu, v, seed, delay):
    raw = {"mass": {"vehicle": m_vehicle, "h_cg": h_cg},
           "perch": {"catalog": key, "inclination": theta, "friction_coefficient": mu},
           "approach": {"impact_velocity": v, "seed": seed}, "cycle": {"release_delay": delay}}
    config, report = validate_config(raw)
    assert report.ok
    again, report2 = validate_config(json.loads(config.to_json()))
    assert report2.ok and not report2.unknown_keys
    assert again == config


def test_calibration_round_trip_is_bit_exact():
    _, _, _, cal = default_system()
    back = CalibrationSet.from_json(cal.to_json())
    assert back == cal
    assert all(back[k] == cal[k] for k in cal.params)


def test_calibration_provenance_tags():
    _, _, _, cal = default_system()
    assert {p.provenance for p in cal.params.values()} <= {"paper", "fitted", "default"}


def test_calibration_unknown_override():
    _, _, _, cal = default_system()
    with pytest.raises(KeyError):
        cal.with_values(no_such_parameter=1.0)
