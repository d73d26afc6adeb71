"""Perch-cycle supervisor: landing, energy-free hold, reset/release, take-off.

The supervisor is an event-sourced state machine.  ``step`` is pure; illegal
events leave the state unchanged and are marked as rejected in the log.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Union

import numpy as np

from .core import G, CalibrationSet
from .mechanism import (
    CloseBy,
    GripState,
    Grippers,
    OpenBy,
    Pawl,
    ReleaseResetPull,
    ResetPull,
    ServoPower,
    SetServoPower,
    ratchet_step,
    seated_closure,
)
from .telemetry import CycleSegmentation, PhaseInterval, Source, TelemetryTrace

MAX_DEPARTURE_ANGLE = 36.0


class Phase(str, enum.Enum):
    FLYING = "Flying"
    DESCENT = "Descent"
    TRIGGERED = "Triggered"
    GRIPPING = "Gripping"
    PERCHED = "Perched"
    RESETTING = "Resetting"
    RELEASING = "Releasing"
    TAKEOFF = "Takeoff"


# -- events -----------------------------------------------------------------


@dataclass(frozen=True)
class ContactTrigger:
    pass


@dataclass(frozen=True)
class TimerElapsed:
    dt: float

    def __post_init__(self):
        if not (self.dt >= 0 and math.isfinite(self.dt)):
            raise ValueError("TimerElapsed needs a finite, non-negative dt")


@dataclass(frozen=True)
class IrReleaseCommand:
    pass


@dataclass(frozen=True)
class ThrottleSet:
    fraction: float

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("throttle fraction must lie in [0, 1]")


@dataclass(frozen=True)
class TakeoffComplete:
    pass


CycleEvent = Union[ContactTrigger, TimerElapsed, IrReleaseCommand, ThrottleSet, TakeoffComplete]


def event_to_dict(event: CycleEvent) -> dict[str, Any]:
    d: dict[str, Any] = {"type": type(event).__name__}
    d.update(event.__dict__)
    return d


# -- state ------------------------------------------------------------------


@dataclass(frozen=True)
class CycleParams:
    servo_cutoff_delay: float = 0.5
    close_time: float = 0.15
    open_time: float = 0.15
    hover_throttle: float = 0.7
    servo_power: float = 1.2  # W
    hold_closure: float = 20.0  # deg closed onto the perch

    @classmethod
    def from_calibration(cls, cal: CalibrationSet, hold_closure: float = 20.0) -> CycleParams:
        return cls(cal["servo_cutoff_delay"], cal["gripper_close_time"], cal["release_open_time"],
                   cal["hover_throttle"], cal["servo_hold_power"], hold_closure)


@dataclass(frozen=True)
class CycleState:
    phase: Phase = Phase.FLYING
    grip: GripState = field(default_factory=lambda: GripState(servo_power=ServoPower.OFF))
    timer: float = 0.0  # since trigger, or since the release command in Releasing
    release_pending: bool = False
    throttle: float = 0.0
    t: float = 0.0
    servo_energy: float = 0.0  # J

    def check_invariants(self, params: CycleParams) -> None:
        if self.phase is Phase.PERCHED:
            assert self.grip.servo_power is ServoPower.OFF, "servo powered while perched"
            assert self.grip.pawl is Pawl.ENGAGED, "pawl not engaged while perched"
            assert self.throttle == 0.0, "throttle up while perched"
            assert self.grip.grippers is Grippers.CLOSED, "grippers open while perched"
        if self.phase is Phase.RELEASING:
            assert self.throttle >= params.hover_throttle, "releasing below hover throttle"


def _powered_energy(state: CycleState, seconds: float, params: CycleParams) -> float:
    if state.grip.servo_power is ServoPower.OFF or seconds <= 0:
        return state.servo_energy
    return state.servo_energy + params.servo_power * seconds


def transition(state: CycleState, event: CycleEvent, params: CycleParams | None = None) -> tuple[CycleState, bool]:
    """Apply ``event``; returns the new state and whether it was accepted."""
    params = params or CycleParams()
    ph = state.phase

    if isinstance(event, TimerElapsed):
        dt = event.dt
        new_t = state.t + dt
        if ph in (Phase.TRIGGERED, Phase.GRIPPING):
            timer = state.timer + dt
            powered = min(timer, params.servo_cutoff_delay) - state.timer
            energy = _powered_energy(state, powered, params)
            if timer >= params.servo_cutoff_delay:
                grip = ratchet_step(state.grip, SetServoPower(False))
                return replace(state, phase=Phase.PERCHED, grip=grip, timer=timer, t=new_t,
                               servo_energy=energy, throttle=0.0), True
            phase = Phase.GRIPPING if timer >= params.close_time else ph
            return replace(state, phase=phase, timer=timer, t=new_t, servo_energy=energy), True
        if ph is Phase.RELEASING:
            timer = state.timer + dt
            energy = _powered_energy(state, min(timer, params.open_time) - state.timer, params)
            if timer >= params.open_time:
                grip = ratchet_step(state.grip, SetServoPower(False))
                return replace(state, phase=Phase.TAKEOFF, grip=grip, timer=timer, t=new_t,
                               servo_energy=energy), True
            return replace(state, timer=timer, t=new_t, servo_energy=energy), True
        if ph is Phase.PERCHED:
            # passive hold: the accounting variable is not touched
            return replace(state, t=new_t), True
        return replace(state, t=new_t, servo_energy=_powered_energy(state, dt, params)), True

    if isinstance(event, ThrottleSet):
        f = event.fraction
        if ph is Phase.FLYING:
            return replace(state, throttle=f, phase=Phase.DESCENT if f == 0.0 else ph), True
        if ph is Phase.DESCENT:
            return replace(state, throttle=f, phase=Phase.FLYING if f > 0.0 else ph), True
        if ph is Phase.RESETTING:
            if f >= params.hover_throttle:
                grip = ratchet_step(state.grip, OpenBy(state.grip.closure_angle))
                return replace(state, phase=Phase.RELEASING, throttle=f, grip=grip, timer=0.0,
                               release_pending=False), True
            return replace(state, throttle=f), True
        if ph in (Phase.RELEASING, Phase.TAKEOFF):
            if f < params.hover_throttle:
                return state, False
            return replace(state, throttle=f), True
        return state, False

    if isinstance(event, ContactTrigger):
        if ph is not Phase.DESCENT:
            return state, False
        grip = ratchet_step(state.grip, SetServoPower(True))
        grip = ratchet_step(grip, CloseBy(params.hold_closure))
        return replace(state, phase=Phase.TRIGGERED, grip=grip, timer=0.0, throttle=0.0), True

    if isinstance(event, IrReleaseCommand):
        if ph is not Phase.PERCHED:
            return state, False
        # the reset pull retracts the pawl; the fingers stay shut until the
        # throttle reaches hover
        grip = ratchet_step(state.grip, SetServoPower(True))
        grip = ratchet_step(grip, ResetPull())
        return replace(state, phase=Phase.RESETTING, grip=grip, release_pending=True, timer=0.0), True

    if isinstance(event, TakeoffComplete):
        if ph is not Phase.TAKEOFF:
            return state, False
        grip = ratchet_step(state.grip, ReleaseResetPull())
        return replace(state, phase=Phase.FLYING, grip=grip, timer=0.0), True

    raise TypeError(f"unknown cycle event {event!r}")


def step(state: CycleState, event: CycleEvent, params: CycleParams | None = None) -> CycleState:
    return transition(state, event, params)[0]


@dataclass(frozen=True)
class LogEntry:
    t: float
    phase_before: str
    event: dict[str, Any]
    phase_after: str
    accepted: bool

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "phase_before": self.phase_before, "event": self.event,
                           "phase_after": self.phase_after, "accepted": self.accepted}, sort_keys=True)


class Supervisor:
    """Ordered event queue around ``transition`` with an append-only log."""

    def __init__(self, params: CycleParams | None = None, state: CycleState | None = None):
        self.params = params or CycleParams()
        self.state = state or CycleState()
        self.log: list[LogEntry] = []

    def feed(self, event: CycleEvent) -> bool:
        before = self.state
        after, ok = transition(before, event, self.params)
        after.check_invariants(self.params)
        self.log.append(LogEntry(after.t, before.phase.value, event_to_dict(event), after.phase.value, ok))
        self.state = after
        return ok

    def feed_all(self, events: Iterable[CycleEvent]) -> CycleState:
        for e in events:
            self.feed(e)
        return self.state

    def advance_to(self, t: float) -> None:
        if t > self.state.t:
            self.feed(TimerElapsed(t - self.state.t))

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.log)


def write_event_log(entries: Iterable[LogEntry], path: str | Path) -> Path:
    path = Path(path)
    path.write_text("".join(e.to_json() + "\n" for e in entries))
    return path


# -- take-off clearance ------------------------------------------------------


@dataclass(frozen=True)
class TakeoffCheck:
    angle: float
    passed: bool


def takeoff_clearance(angle: float, limit: float = MAX_DEPARTURE_ANGLE) -> TakeoffCheck:
    """Departure within ``limit`` degrees of vertical clears the opened fingers."""
    if not (0.0 <= angle <= 90.0):
        raise ValueError(f"departure angle must lie in [0, 90] deg, got {angle!r}")
    return TakeoffCheck(float(angle), angle <= limit)


# -- full cycle ---------------------------------------------------------------


class CycleFailure(RuntimeError):
    def __init__(self, outcome):
        super().__init__(f"landing failed: {outcome.classification.value}")
        self.outcome = outcome


@dataclass
class FullCycle:
    truth: CycleSegmentation
    log: list[LogEntry]
    trace: TelemetryTrace
    outcome: Any
    perched_energy: tuple[float, float]  # servo energy entering / leaving Perched

    def events_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.log)


def run_full_cycle(scenario, perch=None, release_delay: float = 10.0, *, model=None,
                   takeoff_end_velocity: float | None = None, tail: float = 0.1) -> FullCycle:
    """Land, hold for ``release_delay`` seconds, release and climb out.

    Returns the ground-truth segmentation, the supervisor log and a noise-free
    250 Hz accel trace (flapping harmonic while the motors run).
    """
    from .dynamics import ImpactModel, _default_model

    if release_delay < 0:
        raise ValueError("release_delay must be non-negative")
    if perch is not None:
        scenario = replace(scenario, perch=perch)
    model: ImpactModel = model or _default_model()
    cal = model.cal
    outcome = model.simulate(scenario, record=True)
    if not outcome.success:
        raise CycleFailure(outcome)
    hold = seated_closure(model.mech, scenario.perch, cal["statics.hold_squeeze"])
    params = CycleParams.from_calibration(cal, hold_closure=hold)
    att = outcome.trace
    rate = att.sample_rate
    ts = 1.0 / rate
    v_end = cal["takeoff_end_velocity"] if takeoff_end_velocity is None else float(takeoff_end_velocity)
    a_climb = cal["takeoff_accel"]
    lean = math.radians(cal["takeoff_angle"])
    lead = cal["spinup_lead"]
    t_open = params.open_time

    t_imp = att.metadata["t_impact"]
    t_drop = t_imp - outcome.impact_velocity / G
    t_trig = t_imp + max(outcome.details["t_trigger"], 0.0)
    t_cut = t_trig + params.servo_cutoff_delay
    t_ir = t_cut + release_delay
    t_rel = t_ir + lead
    t_lift = t_rel + t_open
    # linear ramp over the opening, then constant climb acceleration
    ramp_gain = 0.5 * a_climb * t_open
    if v_end < ramp_gain:
        raise ValueError("take-off end velocity below the release ramp gain")
    t_climb_end = t_lift + (v_end - ramp_gain) / a_climb
    t_end = t_climb_end + tail

    n = int(math.ceil(t_end * rate)) + 1
    grid = np.arange(n + 1, dtype=float) * ts  # velocity knots
    vz = np.zeros(n + 1)
    vx = np.zeros(n + 1)
    v_att = np.concatenate([[0.0], np.cumsum(att.vertical_accel) * ts])
    m = min(v_att.size, n + 1)
    vz[:m] = v_att[:m]
    vz[m:] = 0.0

    def speed(t):
        s = np.zeros_like(t)
        r = (t > t_rel) & (t <= t_lift)
        s[r] = 0.5 * a_climb * (t[r] - t_rel) ** 2 / t_open
        c = t > t_lift
        s[c] = ramp_gain + a_climb * (np.minimum(t[c], t_climb_end) - t_lift)
        return s

    s = speed(grid)
    after = grid > t_rel
    vz[after] = s[after] * math.cos(lean)
    vx[after] = s[after] * math.sin(lean)
    # settle the hold: no motion between the attempt record and release
    hold_mask = (grid >= (m - 1) * ts) & ~after
    vz[hold_mask] = 0.0

    accel = np.zeros((n, 3))
    accel[:, 0] = np.diff(vx) * rate
    accel[:, 2] = np.diff(vz) * rate
    t = grid[:-1]
    flap = ((t < t_drop) | (t >= t_ir)).astype(float)
    accel[:, 2] += cal["imu.flap_amplitude"] * flap * np.sin(2 * math.pi * cal["flap_frequency"] * t)
    trace = TelemetryTrace(t, accel, None, Source.SYNTHETIC, rate, {
        "gravity_included": False,
        "t_impact": t_imp,
        "true_impact_velocity": outcome.impact_velocity,
        "release_delay": release_delay,
    })

    sup = Supervisor(params, CycleState(throttle=cal["hover_throttle"]))
    sup.advance_to(t_drop)
    sup.feed(ThrottleSet(0.0))
    sup.advance_to(t_trig)
    sup.feed(ContactTrigger())
    sup.advance_to(t_trig + params.close_time)
    sup.advance_to(t_cut)
    energy_in = sup.state.servo_energy
    sup.advance_to(t_ir)
    energy_out = sup.state.servo_energy
    sup.feed(IrReleaseCommand())
    sup.feed(ThrottleSet(0.5 * cal["hover_throttle"]))
    sup.advance_to(t_rel)
    sup.feed(ThrottleSet(1.0))
    sup.advance_to(t_lift)
    sup.advance_to(t_climb_end)
    sup.feed(TakeoffComplete())

    t_last = float(t[-1])
    truth = CycleSegmentation(
        (
            PhaseInterval("Approach", 0.0, t_imp),
            PhaseInterval("Impact", t_imp, t_cut),
            PhaseInterval("Perched", t_cut, t_ir),
            PhaseInterval("SpinUp", t_ir, t_rel),
            PhaseInterval("Release", t_rel, t_lift),
            PhaseInterval("Takeoff", t_lift, t_last),
        ),
        impact_velocity=outcome.impact_velocity,
        takeoff_end_velocity=v_end,
        servo_cutoff_time=t_cut,
        impact_time=t_imp,
        spinup_onset=t_ir,
        release_time=t_rel,
    )
    return FullCycle(truth, list(sup.log), trace, outcome, (energy_in, energy_out))
