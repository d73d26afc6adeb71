import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perchsim.core import catalog_perch
from perchsim.cycle import (
    MAX_DEPARTURE_ANGLE,
    ContactTrigger,
    CycleFailure,
    CycleParams,
    CycleState,
    IrReleaseCommand,
    Phase,
    Supervisor,
    TakeoffComplete,
    ThrottleSet,
    TimerElapsed,
    run_full_cycle,
    step,
    takeoff_clearance,
    transition,
    write_event_log,
)
from perchsim.dynamics import ApproachScenario
from perchsim.mechanism import Grippers, Pawl, ServoPower

P = CycleParams()
WOOD40 = catalog_perch("wood-40")


def perched():
    s = step(CycleState(throttle=P.hover_throttle), ThrottleSet(0.0))
    s = step(s, ContactTrigger())
    return step(s, TimerElapsed(P.servo_cutoff_delay))


# -- transitions


def test_descent_on_throttle_cut():
    assert step(CycleState(throttle=0.7), ThrottleSet(0.0)).phase is Phase.DESCENT


def test_trigger_closes_and_powers_servo():
    s = step(step(CycleState(throttle=0.7), ThrottleSet(0.0)), ContactTrigger())
    assert s.phase is Phase.TRIGGERED
    assert s.grip.servo_power is ServoPower.ON
    assert s.grip.closure_angle == P.hold_closure


def test_gripping_after_close_time():
    s = step(step(CycleState(), ThrottleSet(0.0)), ContactTrigger())
    assert step(s, TimerElapsed(P.close_time)).phase is Phase.GRIPPING


def test_servo_cut_after_delay():
    s = perched()
    assert s.phase is Phase.PERCHED
    assert s.grip.servo_power is ServoPower.OFF
    assert s.grip.pawl is Pawl.ENGAGED
    assert s.grip.grippers is Grippers.CLOSED
    s.check_invariants(P)


def test_perched_energy_unchanged_by_time():
    s = perched()
    later = step(s, TimerElapsed(3600.0))
    assert later.servo_energy == s.servo_energy
    assert later.phase is Phase.PERCHED


def test_landing_energy_is_power_times_delay():
    assert perched().servo_energy == pytest.approx(P.servo_power * P.servo_cutoff_delay, rel=1e-12)


def test_release_sequence():
    s = step(perched(), IrReleaseCommand())
    assert s.phase is Phase.RESETTING and s.release_pending
    assert s.grip.pawl is Pawl.RETRACTED
    assert s.grip.grippers is Grippers.CLOSED
    s = step(s, ThrottleSet(P.hover_throttle))
    assert s.phase is Phase.RELEASING
    assert s.grip.closure_angle == 0.0
    s = step(s, TimerElapsed(P.open_time))
    assert s.phase is Phase.TAKEOFF
    s = step(s, TakeoffComplete())
    assert s.phase is Phase.FLYING
    assert s.grip.pawl is Pawl.ENGAGED


def test_resetting_waits_for_hover_throttle():
    s = step(step(perched(), IrReleaseCommand()), ThrottleSet(0.5 * P.hover_throttle))
    assert s.phase is Phase.RESETTING
    assert s.grip.grippers is Grippers.CLOSED


@pytest.mark.parametrize("make,event", [
    (CycleState, ContactTrigger()),
    (CycleState, IrReleaseCommand()),
    (CycleState, TakeoffComplete()),
    (perched, ContactTrigger()),
    (perched, ThrottleSet(1.0)),
    (perched, TakeoffComplete()),
])
def test_illegal_event_leaves_state(make, event):
    s = make()
    after, ok = transition(s, event, P)
    assert not ok
    assert after == s


def test_supervisor_logs_rejections():
    sup = Supervisor(P)
    assert not sup.feed(IrReleaseCommand())
    assert sup.log[-1].accepted is False
    assert sup.log[-1].phase_before == sup.log[-1].phase_after == "Flying"


def test_event_validation():
    with pytest.raises(ValueError):
        TimerElapsed(-1.0)
    with pytest.raises(ValueError):
        ThrottleSet(1.5)


# -- safety over random event sequences

cycle_events = st.one_of(
    st.just(ContactTrigger()),
    st.just(IrReleaseCommand()),
    st.just(TakeoffComplete()),
    st.just(ThrottleSet(0.0)),
    st.builds(ThrottleSet, st.floats(0.0, 1.0)),
    st.builds(TimerElapsed, st.floats(0.0, 1.0)),
)


def run_checked(events):
    """Feed ``events`` and assert the safety properties after every step; returns the phases visited."""
    sup = Supervisor(P)
    for ev in events:
        before = sup.state
        sup.feed(ev)  # check_invariants runs on every accepted or rejected step
        after = sup.state
        if after.grip.closure_angle < before.grip.closure_angle:
            assert after.throttle >= P.hover_throttle
        if before.phase is Phase.PERCHED and after.phase is Phase.PERCHED:
            assert after.servo_energy == before.servo_energy
    return {e.phase_after for e in sup.log}


@settings(max_examples=50)
@given(st.lists(cycle_events, min_size=1000, max_size=1000))
def test_no_opening_below_hover(events):
    run_checked(events)


def test_random_sequences_reach_every_phase():
    import random

    rng = random.Random(11)
    pool = [ContactTrigger(), IrReleaseCommand(), TakeoffComplete(), ThrottleSet(0.0), ThrottleSet(1.0),
            ThrottleSet(0.3), TimerElapsed(0.2), TimerElapsed(0.05)]
    assert run_checked([rng.choice(pool) for _ in range(1000)]) == {p.value for p in Phase}


# -- take-off clearance


@pytest.mark.parametrize("angle,ok", [(0.0, True), (35.9, True), (36.0, True), (36.0001, False), (60.0, False)])
def test_clearance_boundary(angle, ok):
    assert takeoff_clearance(angle).passed is ok
    assert MAX_DEPARTURE_ANGLE == 36.0


def test_clearance_range():
    with pytest.raises(ValueError):
        takeoff_clearance(-1.0)


# -- full cycle


@pytest.fixture(scope="module")
def cycle():
    return run_full_cycle(ApproachScenario(WOOD40, impact_velocity=0.82), release_delay=10.0)


def test_full_cycle_phase_order(cycle):
    names = [p.name for p in cycle.truth.phases]
    assert names == ["Approach", "Impact", "Perched", "SpinUp", "Release", "Takeoff"]
    for a, b in zip(cycle.truth.phases, cycle.truth.phases[1:]):
        assert a.end == b.start


def test_full_cycle_perched_energy_zero(cycle):
    e_in, e_out = cycle.perched_energy
    assert e_out - e_in == 0.0


def test_full_cycle_hold_length(cycle):
    perch = cycle.truth.phases[2]
    assert perch.end - perch.start == pytest.approx(10.0, abs=1e-9)


def test_full_cycle_log_all_accepted(cycle):
    assert all(e.accepted for e in cycle.log)
    assert cycle.log[-1].phase_after == "Flying"


def test_event_log_jsonl(cycle, tmp_path):
    path = write_event_log(cycle.log, tmp_path / "events.jsonl")
    lines = path.read_text().splitlines()
    assert len(lines) == len(cycle.log)
    rows = [json.loads(line) for line in lines]
    assert set(rows[0]) == {"t", "phase_before", "event", "phase_after", "accepted"}
    assert all(a["t"] <= b["t"] for a, b in zip(rows, rows[1:]))
    assert path.read_text() == cycle.events_jsonl()


def test_full_cycle_failed_landing():
    with pytest.raises(CycleFailure):
        run_full_cycle(ApproachScenario(WOOD40, impact_velocity=1.29))


def test_full_cycle_negative_delay():
    with pytest.raises(ValueError):
        run_full_cycle(ApproachScenario(WOOD40, impact_velocity=0.82), release_delay=-1.0)
