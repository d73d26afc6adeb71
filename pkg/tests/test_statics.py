import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perchsim.core import CATALOG_KEYS, Circle, PerchSpec, catalog_perch, default_system
from perchsim.statics import (
    StaticsError,
    StaticsModel,
    axial_moment_capacity,
    baseline_stub,
    catalog_table,
    improvement_vs_baseline,
    inclination_table,
    pull_off_force,
    rotational_moment_capacity,
    static_max_inclination,
    upside_down_capacity,
)

MASS, _, MECH, CAL = default_system()
MODEL = StaticsModel(MASS, MECH, CAL)
WOOD40 = catalog_perch("wood-40")
DIAMOND = catalog_perch("square-diamond")


def test_pull_off_wood40():
    assert pull_off_force(WOOD40) == pytest.approx(7.4, rel=0.10)


def test_pull_off_diamond():
    assert pull_off_force(DIAMOND) == pytest.approx(9.5, rel=0.10)


@pytest.mark.parametrize("key", CATALOG_KEYS)
def test_pull_off_floor(key):
    assert pull_off_force(catalog_perch(key)) >= 6.0


def test_pull_off_catalog_mean():
    assert np.mean([pull_off_force(catalog_perch(k)) for k in CATALOG_KEYS]) == pytest.approx(7.4, rel=0.10)


def test_pull_off_declines_beyond_ten_degrees():
    assert pull_off_force(WOOD40, 12.5) < pull_off_force(WOOD40, 10.0)


def test_upside_down_at_limit():
    # 300 g supported at 12.5 deg
    assert upside_down_capacity(WOOD40, 12.5) == pytest.approx(0.300 * 9.80665, rel=0.05)


def test_upside_down_level_at_least_inclined():
    assert upside_down_capacity(WOOD40, 0.0) >= upside_down_capacity(WOOD40, 12.5)


def test_upside_down_carries_own_weight():
    assert upside_down_capacity(WOOD40, 0.0) >= MASS.m_total * 9.80665
    assert MASS.m_total * 9.80665 == pytest.approx(1.69, abs=0.01)


def test_upside_down_step_then_plateau():
    vals = [upside_down_capacity(WOOD40, t) for t in (0.0, 2.5, 5.0, 7.5, 10.0, 12.5)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[2] < vals[0]
    assert vals[2] == vals[3] == vals[4] == vals[5]


def test_rotational_diamond():
    assert rotational_moment_capacity(DIAMOND) == pytest.approx(0.127, rel=0.10)


def test_rotational_small_diameter_worst():
    assert rotational_moment_capacity(catalog_perch("wood-30")) < rotational_moment_capacity(WOOD40)


def test_rotational_consistent_across_inclination():
    assert rotational_moment_capacity(WOOD40, 10.0) == pytest.approx(rotational_moment_capacity(WOOD40), rel=0.20)


def test_axial_mean_perch():
    assert axial_moment_capacity(WOOD40) == pytest.approx(0.103, rel=1e-9)
    assert np.mean([axial_moment_capacity(catalog_perch(k)) for k in CATALOG_KEYS]) == pytest.approx(0.103, rel=0.10)


def test_axial_diamond():
    assert axial_moment_capacity(DIAMOND) == pytest.approx(0.143, rel=0.10)


def test_axial_at_limit():
    assert axial_moment_capacity(WOOD40, 12.5) <= 0.01


def test_axial_matches_margin_oracle():
    for theta in (0.0, 5.0, 10.0):
        expected = 0.103 - MASS.m_total * 9.80665 * MASS.h_cg * math.sin(math.radians(theta))
        assert axial_moment_capacity(WOOD40, theta) == pytest.approx(expected, rel=1e-9)


def test_static_max_inclination():
    assert static_max_inclination(WOOD40) == pytest.approx(12.5, abs=0.5)


def test_doubled_base_moment_doubles_sine():
    m0 = MODEL.axial_base_moment(WOOD40)
    s1 = math.sin(math.radians(MODEL.static_max_inclination(WOOD40, m0)))
    s2 = math.sin(math.radians(MODEL.static_max_inclination(WOOD40, 2 * m0)))
    assert s2 == pytest.approx(2 * s1, rel=1e-12)


def test_zero_base_moment():
    assert MODEL.static_max_inclination(WOOD40, 0.0) == 0.0


@given(st.sampled_from(CATALOG_KEYS), st.floats(0.0, 19.0))
def test_axial_strictly_decreasing_until_zero(key, theta):
    perch = catalog_perch(key)
    a, b = MODEL.axial_moment_capacity(perch, theta), MODEL.axial_moment_capacity(perch, theta + 1.0)
    assert b >= 0.0
    if a > 0:
        assert b < a
    else:
        assert b == 0.0


@pytest.mark.parametrize("key", CATALOG_KEYS)
def test_capacities_linear_in_grip_force(key):
    perch = catalog_perch(key)
    doubled = StaticsModel(MASS, replace(MECH, servo_stall_torque=2 * MECH.servo_stall_torque), CAL)
    for name in ("pull_off_force", "upside_down_capacity", "rotational_moment_capacity"):
        assert getattr(doubled, name)(perch, 5.0) == pytest.approx(2 * getattr(MODEL, name)(perch, 5.0), rel=1e-9)
    assert doubled.axial_base_moment(perch) == pytest.approx(2 * MODEL.axial_base_moment(perch), rel=1e-9)


def test_shape_ordering():
    assert pull_off_force(DIAMOND) >= pull_off_force(WOOD40) >= pull_off_force(catalog_perch("wood-30"))


@pytest.mark.parametrize("key", CATALOG_KEYS)
def test_envelope_invariants(key):
    env = MODEL.envelope(catalog_perch(key))
    assert min(env.pull_off_up, env.pull_off_down, env.rotational_moment, env.axial_moment) >= 0
    assert env.pull_off_up >= MASS.m_total * 9.80665


def test_unsupported_perch():
    with pytest.raises(StaticsError):
        MODEL.pull_off_force(PerchSpec(Circle(0.1)))


def test_off_catalog_round_bar_interpolates():
    f = MODEL.pull_off_force(PerchSpec(Circle(0.035), label="dowel-35"))
    lo, hi = sorted((MODEL.pull_off_force(catalog_perch("wood-30")), MODEL.pull_off_force(WOOD40)))
    assert lo * 0.8 <= f <= hi * 1.2


def test_catalog_golden(data):
    assert catalog_table(MODEL.catalog_envelopes()) == (data / "golden" / "statics_catalog.csv").read_text()


def test_catalog_deterministic():
    assert catalog_table(MODEL.catalog_envelopes()) == catalog_table(MODEL.catalog_envelopes())


def test_inclination_table_axial_monotone():
    rows = inclination_table(MODEL, WOOD40, (0.0, 5.0, 10.0, 12.5)).strip().split("\n")[1:]
    axial = [float(r.split(",")[-1]) for r in rows]
    assert all(a > b for a, b in zip(axial, axial[1:]))
    assert axial[-1] <= 0.01


# -- comparison with the earlier prototype


def test_identical_envelopes_no_improvement():
    envs = MODEL.catalog_envelopes()
    assert improvement_vs_baseline(envs, envs, (1.0, 1.0)) == {"pull_off_up": 0.0, "rotational_moment": 0.0}


def test_baseline_stub_recovers_reported_gains():
    envs = MODEL.catalog_envelopes()
    ratios = improvement_vs_baseline(envs, baseline_stub(envs), (1.0, 1.0))
    assert ratios["pull_off_up"] == pytest.approx(0.42, abs=1e-12)
    assert ratios["rotational_moment"] == pytest.approx(0.63, abs=1e-12)


def test_doubling_current_values():
    envs = MODEL.catalog_envelopes()
    base = baseline_stub(envs)
    doubled = [replace(e, pull_off_up=2 * e.pull_off_up, rotational_moment=2 * e.rotational_moment) for e in envs]
    r = improvement_vs_baseline(doubled, base, (1.0, 1.0))
    assert r["pull_off_up"] == pytest.approx(2 * 1.42 - 1, abs=1e-12)
    assert r["rotational_moment"] == pytest.approx(2 * 1.63 - 1, abs=1e-12)


def test_mismatched_perch_sets():
    envs = MODEL.catalog_envelopes()
    with pytest.raises(StaticsError):
        improvement_vs_baseline(envs, envs[:-1], (1.0, 1.0))
