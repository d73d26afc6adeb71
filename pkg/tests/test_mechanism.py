import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perchsim.core import Circle, PerchSpec, catalog_perch
from perchsim.mechanism import (
    CloseBy,
    Disturb,
    GripState,
    MechanismError,
    MechanismSpec,
    OpenBy,
    Pawl,
    RatchetGeometry,
    ReleaseResetPull,
    ResetPull,
    ServoPower,
    SetServoPower,
    TriggerSpec,
    UnsupportedPerch,
    closure_from_servo,
    contact_closure,
    export_state_trace,
    grip_normal_force,
    ratchet_quantize,
    ratchet_step,
    retained_closure,
    seated_closure,
    trigger_event,
)

SPEC = MechanismSpec()
GEOM = RatchetGeometry()
PITCH = 37.9 / 29


# -- geometric oracle: bisection on the cable-length and loop-closure residuals


def _bisect(f, lo, hi, iters=200):
    flo = f(lo)
    if flo == 0.0:
        return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _oracle_crank(spec, pulled):
    gx, gy = spec.cable_guide
    r = spec.cable_attach
    phi0 = math.radians(spec.crank_rest_angle)

    def length(phi):
        return math.hypot(gx - r * math.cos(phi), gy - r * math.sin(phi))

    target = length(phi0) - pulled
    # the cable shortens monotonically as the crank swings toward the guide
    return _bisect(lambda phi: length(phi) - target, phi0, math.atan2(gy, gx))


def _oracle_output(spec, phi):
    a, b, c, d = spec.top_bar, spec.outer_bar_input, spec.middle_bar, spec.outer_bar_output
    bx, by = b * math.cos(phi), b * math.sin(phi)

    def residual(psi):
        return math.hypot(a + d * math.cos(psi) - bx, d * math.sin(psi) - by) - c

    # bracket every root on a fine grid, keep the assembly with C left of Q->B
    grid = np.linspace(-math.pi, math.pi, 2001)
    vals = [residual(p) for p in grid]
    roots = [_bisect(residual, grid[i], grid[i + 1]) for i in range(len(grid) - 1) if (vals[i] > 0) != (vals[i + 1] > 0)]
    for psi in roots:
        cross = (bx - a) * (d * math.sin(psi)) - by * (d * math.cos(psi))
        if cross > 0:
            return psi
    raise AssertionError("no assembly in the expected mode")


def oracle_closure(servo_angle, spec=SPEC):
    psi0 = _oracle_output(spec, math.radians(spec.crank_rest_angle))
    psi = _oracle_output(spec, _oracle_crank(spec, spec.lever_close * math.radians(servo_angle)))
    return -math.degrees(math.remainder(psi - psi0, 2 * math.pi))


# -- closure_from_servo


def test_closure_at_rest_is_zero():
    assert closure_from_servo(0.0, SPEC) == 0.0


def test_closure_at_full_servo_is_max():
    assert closure_from_servo(SPEC.servo_range, SPEC) == SPEC.max_closure
    assert SPEC.max_closure <= GEOM.sector


def test_closure_midpoint_matches_oracle():
    assert closure_from_servo(90.0, SPEC) == pytest.approx(oracle_closure(90.0), abs=1e-6)


@pytest.mark.parametrize("servo", np.linspace(0.0, 180.0, 13))
def test_closure_matches_oracle_over_range(servo):
    assert closure_from_servo(float(servo), SPEC) == pytest.approx(oracle_closure(float(servo)), abs=1e-6)


def test_closure_monotone_and_continuous():
    s = np.linspace(0.0, 180.0, 1801)
    c = np.array([closure_from_servo(float(x), SPEC) for x in s])
    assert np.all(np.diff(c) >= 0)
    assert np.max(np.abs(np.diff(c))) < 0.1


@pytest.mark.parametrize("bad", [-1.0, 180.5])
def test_closure_out_of_range(bad):
    with pytest.raises(MechanismError):
        closure_from_servo(bad, SPEC)


def test_spec_invariants():
    assert SPEC.servo_stall_torque == 0.55
    assert SPEC.open_half_angle >= 36.0
    with pytest.raises(ValueError):
        MechanismSpec(open_half_angle=30.0)
    with pytest.raises(ValueError):
        MechanismSpec(top_bar=0.0)


# -- ratchet


def test_tooth_pitch():
    assert GEOM.tooth_pitch == pytest.approx(float(Fraction(379, 290)), rel=1e-15)
    np.testing.assert_allclose(GEOM.lockable_angles(), np.arange(30) * PITCH)


@pytest.mark.parametrize("closure,index", [(0.0, 0), (37.9, 29), (2.0, 1)])
def test_quantize_examples(closure, index):
    assert ratchet_quantize(closure, GEOM) == index


def test_quantize_rejects_beyond_sector():
    with pytest.raises(MechanismError):
        ratchet_quantize(38.0, GEOM)
    with pytest.raises(MechanismError):
        ratchet_quantize(-0.1, GEOM)


@given(st.fractions(min_value=0, max_value=Fraction(379, 10)))
def test_quantize_matches_exact_floor(closure):
    # exact rational oracle: floor(closure / (37.9 / 29))
    expected = math.floor(closure / Fraction(379, 290))
    got = ratchet_quantize(float(closure), GEOM)
    # a float within one ulp of a tooth boundary may land on either side
    assert got == expected or abs(float(closure) - expected * PITCH) < 1e-9


@given(st.floats(0.0, 37.9))
def test_quantization_loss_below_pitch(closure):
    k = ratchet_quantize(closure, GEOM)
    retained = k * GEOM.tooth_pitch
    assert retained <= closure + 1e-9
    assert closure - retained < GEOM.tooth_pitch


def test_close_by_example():
    s = GripState(closure_angle=5.0, locked_tooth_index=ratchet_quantize(5.0, GEOM))
    s = ratchet_step(s, CloseBy(1.0))
    assert s.closure_angle == 6.0
    assert s.locked_tooth_index == math.floor(6.0 / PITCH) == 4


def test_reset_pull_retracts():
    s = ratchet_step(GripState(closure_angle=10.0, locked_tooth_index=7), ResetPull())
    assert s.pawl is Pawl.RETRACTED
    assert s.locked_tooth_index is None


def test_release_after_full_open():
    s = ratchet_step(GripState(closure_angle=10.0, locked_tooth_index=7), ResetPull())
    s = ratchet_step(s, OpenBy(10.0))
    assert s.closure_angle == 0.0
    s = ratchet_step(s, ReleaseResetPull())
    assert s.pawl is Pawl.ENGAGED and s.locked_tooth_index == 0


def test_close_requires_servo():
    s = GripState(servo_power=ServoPower.OFF)
    with pytest.raises(MechanismError):
        ratchet_step(s, CloseBy(1.0))


def test_engaged_pawl_blocks_opening():
    s = GripState(closure_angle=10.0, locked_tooth_index=7)
    assert ratchet_step(s, OpenBy(5.0)) == s
    assert ratchet_step(s, Disturb(-3.0)) == s


events = st.one_of(
    st.builds(CloseBy, st.floats(0.0, 5.0)),
    st.builds(OpenBy, st.floats(0.0, 5.0)),
    st.builds(Disturb, st.floats(-5.0, 5.0)),
    st.builds(SetServoPower, st.booleans()),
    st.just(ReleaseResetPull()),
)


def _apply(state, ev):
    try:
        return ratchet_step(state, ev)
    except MechanismError:
        return state


@given(st.lists(events, max_size=60))
def test_index_monotone_without_reset(seq):
    s = GripState()
    prev_index, prev_closure = 0, 0.0
    for ev in seq:
        s = _apply(s, ev)
        assert s.locked_tooth_index >= prev_index
        assert s.closure_angle >= prev_closure
        assert s.locked_tooth_index * PITCH <= s.closure_angle + 1e-9
        prev_index, prev_closure = s.locked_tooth_index, s.closure_angle


@given(st.lists(st.floats(0.0, 4.0), max_size=40))
def test_close_by_sequences_monotone(deltas):
    s = GripState()
    for d in deltas:
        nxt = ratchet_step(s, CloseBy(d))
        assert nxt.closure_angle >= s.closure_angle
        assert nxt.locked_tooth_index >= s.locked_tooth_index
        s = nxt


@given(st.floats(0.0, 37.9), st.lists(st.floats(-10.0, 10.0), max_size=30))
def test_energy_free_hold(closure, pushes):
    s = GripState(closure_angle=closure, locked_tooth_index=ratchet_quantize(closure, GEOM),
                  servo_power=ServoPower.OFF)
    for p in pushes:
        s2 = ratchet_step(s, Disturb(p))
        assert s2.closure_angle == s.closure_angle
        s2 = ratchet_step(s, OpenBy(abs(p)))
        assert s2.closure_angle == s.closure_angle


def test_retained_closure():
    assert retained_closure(GripState(closure_angle=6.0, locked_tooth_index=4), GEOM) == pytest.approx(4 * PITCH)
    assert retained_closure(GripState(pawl=Pawl.RETRACTED, locked_tooth_index=None), GEOM) == 0.0


# -- trigger


def test_trigger_constant_below_threshold():
    assert trigger_event([1.0] * 50, TriggerSpec(), dt=0.002) is None


def test_trigger_ramp_crossing():
    t = np.linspace(0.0, 0.1, 101)
    assert trigger_event(32.0 * t, TriggerSpec(), t=t) == pytest.approx(0.05, abs=1e-12)


def test_trigger_single_sample_boundary():
    assert trigger_event([1.6], TriggerSpec(), dt=0.004) == 0.0


def test_trigger_empty():
    with pytest.raises(MechanismError):
        trigger_event([], TriggerSpec(), dt=0.004)


def test_trigger_threshold_below_legacy():
    with pytest.raises(ValueError):
        TriggerSpec(activation_force=2.6)


# -- grip force


def test_no_contact_gives_zero_force():
    pipe = catalog_perch("pvc-50")
    assert grip_normal_force(SPEC, pipe, 0.5 * contact_closure(SPEC, pipe)) == 0.0


def test_force_linear_in_stall_torque():
    from dataclasses import replace

    perch = catalog_perch("wood-40")
    closure = seated_closure(SPEC, perch, 6.0)
    doubled = replace(SPEC, servo_stall_torque=1.1)
    assert grip_normal_force(doubled, perch, closure) == pytest.approx(2 * grip_normal_force(SPEC, perch, closure))


def test_force_non_increasing_in_perch_size():
    closure = SPEC.max_closure
    forces = [grip_normal_force(SPEC, PerchSpec(Circle(d)), closure) for d in (0.030, 0.035, 0.040, 0.045, 0.050)]
    assert all(a >= b for a, b in zip(forces, forces[1:]))


def test_wide_perch_unsupported():
    with pytest.raises(UnsupportedPerch):
        contact_closure(SPEC, PerchSpec(Circle(0.1)))


def test_state_trace_export(tmp_path):
    path = tmp_path / "states.csv"
    export_state_trace([(0.0, GripState()), (0.1, ratchet_step(GripState(), ResetPull()))], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,closure_angle,tooth_index,pawl,servo_power"
    assert lines[2].split(",")[2:] == ["", "retracted", "on"]
