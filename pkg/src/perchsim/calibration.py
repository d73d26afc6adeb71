"""The default calibration set.

Statics coefficients are fitted at build time from the catalog targets (see
:mod:`perchsim.statics`); the impact-model parameters below were fitted
against the free-fall envelope anchors with ``scripts/fit_envelope.py`` and
frozen here.
"""

from __future__ import annotations

from functools import lru_cache
from types import MappingProxyType

from .core import DEFAULT_FRICTION, CalibrationSet, MassProperties, Parameter

CALIBRATION_ID = "default-v1"

# name: (value, unit, provenance, note)
_BASE = {
    "friction_coefficient": (DEFAULT_FRICTION, "1", "default", "anti-slip lining on wood/PVC"),
    "statics.hold_squeeze": (6.0, "deg", "default", "closure past first contact absorbed by the fingers"),
    # trigger fork and gripper timing
    "fork_stiffness": (10000.0, "N/m", "fitted", "trigger fork contact stiffness"),
    "fork_damping": (16.58, "N*s/m", "fitted", "trigger fork damping (zeta ~ 0.2)"),
    "fork_stop_stiffness": (2.0e5, "N/m", "default", "hard stop past fork travel"),
    "gripper_close_time": (0.15, "s", "default", "trigger to fully closed"),
    "servo_cutoff_delay": (0.5, "s", "paper", "servo power cut after impact"),
    "grip_stiffness": (4000.0, "N/m", "default", "vertical stiffness of the closed grip"),
    "grip_damping": (40.0, "N*s/m", "default", "vertical damping of the closed grip"),
    # capture / balance model
    "capture_window": (0.0290, "m", "fitted", "rise of the grip axis the closing fingers still catch"),
    "cg_axial_offset": (0.0293, "m", "fitted", "CG offset along the perch axis (balance at ~6 deg)"),
    "incline_coupling": (0.1, "1", "fitted", "downhill recoil arm per unit CG lean"),
    "approach_lean": (0.75, "deg", "fitted", "mean axial lean picked up on approach"),
    "recoil_lean": (1.0, "deg*s/m", "fitted", "axial lean per m/s of impact speed"),
    "disturbance.attitude_rate": (0.10, "rad/s", "fitted", "release attitude-rate spread"),
    "disturbance.lateral_offset": (0.0030, "m", "fitted", "CG offset spread along the perch"),
    "disturbance.axial_lean": (0.15, "deg", "fitted", "axial lean spread"),
    # perch cycle
    "hover_throttle": (0.7, "1", "default", "throttle fraction that holds a hover"),
    "spinup_lead": (0.3, "s", "paper", "motor spin-up before gripper release"),
    "release_open_time": (0.15, "s", "default", "gripper opening time, same as closing"),
    "takeoff_end_velocity": (1.48, "m/s", "paper", "climb-out speed after release"),
    "takeoff_accel": (4.0, "m/s^2", "default", "mean climb-out acceleration"),
    "takeoff_angle": (15.0, "deg", "default", "departure angle from vertical"),
    "servo_hold_power": (1.2, "W", "default", "servo draw while powered"),
    # telemetry synthesis
    "flap_frequency": (19.0, "Hz", "paper", "flapping frequency seen in the IMU"),
    "imu.noise_std": (0.6, "m/s^2", "fitted", "IMU white noise"),
    "imu.flap_amplitude": (0.8, "m/s^2", "fitted", "flapping harmonic while motors run"),
    "imu.scale_std": (0.05, "1", "fitted", "per-recording IMU scale error"),
    "mocap.noise_std": (0.0002, "m", "default", "motion-capture position noise"),
}


def _statics_params() -> dict[str, Parameter]:
    from .mechanism import MechanismSpec
    from .statics import AXIAL_TARGETS, PULL_OFF_TARGETS, ROTATIONAL_TARGETS, fit_coefficients

    fitted = fit_coefficients(MassProperties(), MechanismSpec(), DEFAULT_FRICTION, _BASE["statics.hold_squeeze"][0])
    params = {}
    for name, value in fitted.items():
        if name == "h_cg":
            params[name] = Parameter(value, "m", "fitted", "CG height from the 12.5 deg axial-margin zero")
            continue
        parts = name.split(".")
        if len(parts) == 3:
            kind, key = parts[1], parts[2]
            table = {"pull": PULL_OFF_TARGETS, "rot": ROTATIONAL_TARGETS, "axial": AXIAL_TARGETS}[kind]
            unit = "1" if kind == "pull" else "m"
            target, prov = table[key]
            params[name] = Parameter(value, unit, "fitted", f"target {target:g} ({prov})")
        else:
            params[name] = Parameter(value, "1", "fitted", "hanging-test ratio")
    return params


@lru_cache(maxsize=1)
def default_calibration() -> CalibrationSet:
    params = {k: Parameter(*v) for k, v in _BASE.items()}
    params.update(_statics_params())
    return CalibrationSet(CALIBRATION_ID, MappingProxyType(dict(sorted(params.items()))))
