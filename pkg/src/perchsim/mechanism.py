"""Gripping mechanism: linkage kinematics, ratchet/pawl state, contact trigger.

Geometry conventions
--------------------
The four-bar sits in the plane of the top bar.  Ground pivots are at
``(0, 0)`` and ``(top_bar, 0)``; the cable-driven input crank (first outer
bar) turns about the origin, the middle bar couples it to the second outer
bar, which carries the ratchet wheel.  "Closure" is the rotation of that
output bar away from its rest (fully open) position, in degrees, and is the
same angle the ratchet wheel turns through.

Each gripper face is a straight line through the grip axis, leaning out from
the vertical by ``open_half_angle - closure``.  The perch sits with its top on
the trigger fork, ``fork_depth`` below the grip axis.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import PerchSpec


class MechanismError(ValueError):
    pass


class UnsupportedPerch(MechanismError):
    """The gripper cannot enclose the perch (too large or too small)."""


@dataclass(frozen=True)
class RatchetGeometry:
    tooth_count: int = 29
    sector: float = 37.9  # deg
    root_diameter: float = 0.064
    flank_angle: float = 18.3  # deg
    fillet_radius: float = 0.00015
    pawl_spring_preload: float = 1.0  # N

    def __post_init__(self):
        if self.tooth_count < 1:
            raise ValueError("tooth_count must be >= 1")
        if not (self.sector > 0 and self.root_diameter > 0 and self.fillet_radius > 0):
            raise ValueError("ratchet dimensions must be positive")

    @property
    def tooth_pitch(self) -> float:
        return self.sector / self.tooth_count

    @property
    def tooth_pitch_arc(self) -> float:
        """Pitch measured along the root circle (m)."""
        return math.radians(self.tooth_pitch) * 0.5 * self.root_diameter

    @property
    def tooth_height(self) -> float:
        """Height of the right-triangle tooth whose hypotenuse leans ``flank_angle`` off the flank."""
        return self.tooth_pitch_arc / math.tan(math.radians(self.flank_angle))

    def lockable_angles(self) -> np.ndarray:
        return np.arange(self.tooth_count + 1) * self.tooth_pitch


@dataclass(frozen=True)
class TriggerSpec:
    activation_force: float = 1.6
    legacy_activation_force: float = 2.6
    # None defers to the calibration set
    fork_stiffness: float | None = None
    fork_damping: float | None = None
    fork_travel_limit: float = 0.02

    def __post_init__(self):
        if not self.activation_force > 0:
            raise ValueError("activation_force must be positive")
        if not self.activation_force < self.legacy_activation_force:
            raise ValueError("activation_force must be below the legacy 2.6 N switch")
        if not self.fork_travel_limit > 0:
            raise ValueError("fork_travel_limit must be positive")


@dataclass(frozen=True)
class MechanismSpec:
    top_bar: float = 0.042
    outer_bar_input: float = 0.028
    outer_bar_output: float = 0.045
    middle_bar: float = 0.040
    gripper_length: float = 0.070
    open_half_angle: float = 40.0  # deg
    servo_stall_torque: float = 0.55  # N*m at servo_voltage
    servo_voltage: float = 7.4
    servo_range: float = 180.0  # deg
    lever_close: float = 0.0020
    lever_reset: float = 0.0015
    lever_open: float = 0.0020
    cable_attach: float = 0.020
    cable_guide: tuple[float, float] = (-0.005, 0.050)
    crank_rest_angle: float = -10.0  # deg
    fork_depth: float = 0.02031
    ratchet: RatchetGeometry = field(default_factory=RatchetGeometry)
    trigger: TriggerSpec = field(default_factory=TriggerSpec)

    def __post_init__(self):
        lengths = (self.top_bar, self.outer_bar_input, self.outer_bar_output, self.middle_bar,
                   self.gripper_length, self.lever_close, self.lever_reset, self.lever_open,
                   self.cable_attach, self.fork_depth)
        if any(not (x > 0 and math.isfinite(x)) for x in lengths):
            raise ValueError("all mechanism lengths must be positive")
        if self.open_half_angle < 36.0:
            raise ValueError("full-open half-angle must be >= 36 deg to clear the take-off cone")
        if not self.servo_stall_torque > 0:
            raise ValueError("servo_stall_torque must be positive")
        # the linkage must assemble over the whole servo range
        try:
            top = _closure_closed_form(self, self.servo_range)
        except ValueError as exc:
            raise ValueError(f"linkage does not assemble over the servo range: {exc}") from None
        if top > self.ratchet.sector + 1e-9:
            raise ValueError(f"max closure {top:.3f} deg exceeds the ratchet sector")

    @property
    def max_closure(self) -> float:
        return closure_from_servo(self.servo_range, self)


# ---------------------------------------------------------------------------
# linkage kinematics


def _crank_from_cable(spec: MechanismSpec, pulled: float) -> float:
    gx, gy = spec.cable_guide
    gr = math.hypot(gx, gy)
    gam = math.atan2(gy, gx)
    r = spec.cable_attach
    phi0 = math.radians(spec.crank_rest_angle)
    l0 = math.hypot(gx - r * math.cos(phi0), gy - r * math.sin(phi0))
    length = l0 - pulled
    cosv = (gr * gr + r * r - length * length) / (2 * gr * r)
    if not -1.0 <= cosv <= 1.0:
        raise ValueError("cable cannot reach the crank")
    return gam - math.acos(cosv)


def _output_from_crank(spec: MechanismSpec, phi: float) -> float:
    a, b, c, d = spec.top_bar, spec.outer_bar_input, spec.middle_bar, spec.outer_bar_output
    dx = b * math.cos(phi) - a
    dy = b * math.sin(phi)
    r = math.hypot(dx, dy)
    cosv = (d * d + r * r - c * c) / (2 * d * r)
    if not -1.0 <= cosv <= 1.0:
        raise ValueError("four-bar does not close")
    return math.atan2(dy, dx) + math.acos(cosv)


def _closure_closed_form(spec: MechanismSpec, servo_angle: float) -> float:
    pulled = spec.lever_close * math.radians(servo_angle)
    psi0 = _output_from_crank(spec, math.radians(spec.crank_rest_angle))
    psi = _output_from_crank(spec, _crank_from_cable(spec, pulled))
    delta = math.remainder(psi - psi0, 2 * math.pi)
    return -math.degrees(delta)


def closure_from_servo(servo_angle: float, spec: MechanismSpec) -> float:
    """Closure (deg) produced by turning the closing lever to ``servo_angle`` (deg).

    The lever winds the inextensible closing cable, which swings the input
    crank; the four-bar carries that to the output bar.
    """
    if not (0.0 <= servo_angle <= spec.servo_range):
        raise MechanismError(f"servo angle {servo_angle!r} outside [0, {spec.servo_range}] deg")
    if servo_angle == 0.0:
        return 0.0
    return _closure_closed_form(spec, servo_angle)


def servo_from_closure(closure: float, spec: MechanismSpec) -> float:
    """Inverse of :func:`closure_from_servo`."""
    top = spec.max_closure
    if not (0.0 <= closure <= top):
        raise MechanismError(f"closure {closure!r} outside [0, {top:.4f}] deg")
    if closure == 0.0:
        return 0.0
    if closure == top:
        return spec.servo_range
    return brentq(lambda s: closure_from_servo(s, spec) - closure, 0.0, spec.servo_range, xtol=1e-12)


def servo_per_closure(closure: float, spec: MechanismSpec) -> float:
    """Transmission ratio d(servo)/d(closure) at ``closure`` (dimensionless)."""
    s = servo_from_closure(closure, spec)
    h = 1e-4
    lo, hi = max(0.0, s - h), min(spec.servo_range, s + h)
    dclosure = closure_from_servo(hi, spec) - closure_from_servo(lo, spec)
    return (hi - lo) / dclosure


# ---------------------------------------------------------------------------
# gripper / perch contact geometry


def _perch_centre_depth(spec: MechanismSpec, perch: PerchSpec) -> float:
    return spec.fork_depth + perch.support(0.0, 1.0)


def contact_half_angle(spec: MechanismSpec, perch: PerchSpec) -> float:
    """Gripper half-angle (deg from vertical) at which the faces first touch the perch."""
    depth = _perch_centre_depth(spec, perch)

    def gap(alpha: float) -> float:
        return perch.support(math.cos(alpha), math.sin(alpha)) - depth * math.sin(alpha)

    hi = math.radians(89.0)
    if gap(hi) > 0:
        raise UnsupportedPerch(f"perch {perch.label!r} is wider than the open gripper")
    return math.degrees(brentq(gap, 1e-9, hi, xtol=1e-14))


def contact_closure(spec: MechanismSpec, perch: PerchSpec) -> float:
    """Closure (deg) at which the gripper faces first touch ``perch``."""
    alpha = contact_half_angle(spec, perch)
    closure = spec.open_half_angle - alpha
    if closure < 0:
        raise UnsupportedPerch(f"perch {perch.label!r} does not fit into the open gripper")
    if closure >= spec.max_closure:
        raise UnsupportedPerch(f"perch {perch.label!r} is too small for the gripper to reach")
    return closure


def contact_distance(spec: MechanismSpec, perch: PerchSpec) -> float:
    """Distance from the grip axis along the gripper face to the contact point (m)."""
    alpha = math.radians(contact_half_angle(spec, perch))
    return _perch_centre_depth(spec, perch) * math.cos(alpha)


def seated_closure(spec: MechanismSpec, perch: PerchSpec, squeeze: float) -> float:
    """Closure retained by the ratchet after the servo squeezes the soft fingers.

    ``squeeze`` is the extra closure (deg) past first contact that the Fin Ray
    fingers absorb before the servo stalls.
    """
    target = min(contact_closure(spec, perch) + squeeze, spec.max_closure)
    return ratchet_quantize(target, spec.ratchet) * spec.ratchet.tooth_pitch


def grip_normal_force(spec: MechanismSpec, perch: PerchSpec, closure_angle: float) -> float:
    """Total normal force (N) the fingers press onto ``perch`` at ``closure_angle``.

    Zero when the fingers are not yet touching the perch; raises
    :class:`UnsupportedPerch` if the perch cannot be enclosed at all.
    """
    if closure_angle < contact_closure(spec, perch):
        return 0.0
    ratio = servo_per_closure(min(closure_angle, spec.max_closure), spec)
    force = spec.servo_stall_torque * ratio / contact_distance(spec, perch)
    return max(force, 0.0)


# ---------------------------------------------------------------------------
# ratchet state


class Pawl(enum.Enum):
    ENGAGED = "engaged"
    RETRACTED = "retracted"


class ServoPower(enum.Enum):
    ON = "on"
    OFF = "off"


class Grippers(enum.Enum):
    OPEN = "open"
    CLOSING = "closing"
    CLOSED = "closed"


@dataclass(frozen=True)
class GripState:
    closure_angle: float = 0.0
    locked_tooth_index: int | None = 0
    pawl: Pawl = Pawl.ENGAGED
    servo_power: ServoPower = ServoPower.ON
    grippers: Grippers = Grippers.OPEN


@dataclass(frozen=True)
class CloseBy:
    delta: float


@dataclass(frozen=True)
class OpenBy:
    """Opening cable pull; blocked by an engaged pawl."""

    delta: float


@dataclass(frozen=True)
class Disturb:
    """External load trying to change the closure by ``delta`` degrees."""

    delta: float


@dataclass(frozen=True)
class ResetPull:
    pass


@dataclass(frozen=True)
class ReleaseResetPull:
    pass


@dataclass(frozen=True)
class SetServoPower:
    on: bool


RatchetEvent = CloseBy | OpenBy | Disturb | ResetPull | ReleaseResetPull | SetServoPower


def ratchet_quantize(closure_angle: float, geom: RatchetGeometry) -> int:
    """Index of the last tooth passed by the pawl at ``closure_angle``."""
    if closure_angle < 0 or closure_angle > geom.sector * (1 + 1e-12):
        raise MechanismError(f"closure {closure_angle!r} outside [0, {geom.sector}] deg")
    # scaled by tooth_count / sector rather than divided by the pitch to keep
    # exact tooth positions (e.g. the sector end) on the right side of floor()
    return min(geom.tooth_count, math.floor(closure_angle * geom.tooth_count / geom.sector + 1e-9))


def _grippers_for(closure: float) -> Grippers:
    return Grippers.OPEN if closure <= 0.0 else Grippers.CLOSED


def ratchet_step(state: GripState, event: RatchetEvent, geom: RatchetGeometry | None = None) -> GripState:
    """Pure transition of the ratchet/pawl/servo state."""
    geom = geom or RatchetGeometry()
    engaged = state.pawl is Pawl.ENGAGED
    if isinstance(event, CloseBy):
        if event.delta < 0:
            raise MechanismError("CloseBy needs a non-negative delta")
        if state.servo_power is ServoPower.OFF:
            raise MechanismError("cannot close with the servo unpowered")
        closure = min(state.closure_angle + event.delta, geom.sector)
        index = ratchet_quantize(closure, geom) if engaged else None
        if engaged and state.locked_tooth_index is not None:
            index = max(index, state.locked_tooth_index)
        return replace(state, closure_angle=closure, locked_tooth_index=index, grippers=_grippers_for(closure))
    if isinstance(event, (OpenBy, Disturb)):
        delta = -abs(event.delta) if isinstance(event, OpenBy) else event.delta
        if engaged and delta < 0:
            return state
        if delta > 0 and state.servo_power is ServoPower.OFF:
            # nothing drives the linkage closed without the servo
            return state
        closure = min(max(state.closure_angle + delta, 0.0), geom.sector)
        index = state.locked_tooth_index
        if engaged:
            index = max(ratchet_quantize(closure, geom), index or 0)
        return replace(state, closure_angle=closure, locked_tooth_index=index, grippers=_grippers_for(closure))
    if isinstance(event, ResetPull):
        return replace(state, pawl=Pawl.RETRACTED, locked_tooth_index=None)
    if isinstance(event, ReleaseResetPull):
        if engaged:
            return state
        return replace(state, pawl=Pawl.ENGAGED, locked_tooth_index=ratchet_quantize(state.closure_angle, geom))
    if isinstance(event, SetServoPower):
        return replace(state, servo_power=ServoPower.ON if event.on else ServoPower.OFF)
    raise MechanismError(f"unknown ratchet event {event!r}")


def retained_closure(state: GripState, geom: RatchetGeometry) -> float:
    """Closure the ratchet holds once the servo lets go."""
    if state.pawl is Pawl.RETRACTED or state.locked_tooth_index is None:
        return 0.0
    return state.locked_tooth_index * geom.tooth_pitch


# ---------------------------------------------------------------------------
# trigger


def trigger_event(force: Sequence[float], spec: TriggerSpec, dt: float | None = None,
                  t: Sequence[float] | None = None) -> float | None:
    """First time the fork force reaches ``spec.activation_force``.

    Give either a uniform sample interval ``dt`` (first sample at t=0) or the
    sample times ``t``.  The crossing is linearly interpolated between
    samples; ``None`` if the threshold is never reached.
    """
    f = np.asarray(force, dtype=float)
    if f.size == 0:
        raise MechanismError("empty force history")
    if t is None:
        if dt is None or dt <= 0:
            raise MechanismError("need a positive dt or explicit sample times")
        times = np.arange(f.size) * dt
    else:
        times = np.asarray(t, dtype=float)
        if times.shape != f.shape:
            raise MechanismError("force and time arrays differ in length")
    thr = spec.activation_force
    hits = np.flatnonzero(f >= thr)
    if hits.size == 0:
        return None
    i = int(hits[0])
    if i == 0:
        return float(times[0])
    f0, f1 = f[i - 1], f[i]
    return float(times[i - 1] + (thr - f0) / (f1 - f0) * (times[i] - times[i - 1]))


def export_state_trace(rows: Iterable[tuple[float, GripState]], path: str | Path) -> None:
    """Write ``t, closure_angle, tooth_index, pawl, servo_power`` CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "closure_angle", "tooth_index", "pawl", "servo_power"])
        for t, s in rows:
            idx = "" if s.locked_tooth_index is None else s.locked_tooth_index
            w.writerow([repr(float(t)), repr(float(s.closure_angle)), idx, s.pawl.value, s.servo_power.value])
