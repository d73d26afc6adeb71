"""Perching-attempt simulation and the impact-velocity x inclination sweep.

The vehicle drops onto the perch with the throttle at zero.  Vertically it is
a point mass on the elastic trigger fork (spring-damper, one-sided); the fork
force trips the switch, the fingers then need ``gripper_close_time`` to close.
The attempt is captured only if the grip axis stays inside the capture window
until closure completes.  Two things push it out:

* rebound off the fork, which grows with impact speed;
* lean: the fork impulse acts with an arm equal to the CG offset along the
  perch axis, so the vehicle starts to rotate and the finger tips rise by
  ``finger_length * lean``.  On an inclined perch the CG moves along the axis
  by ``h_cg * sin(theta)``, cancelling a built-in offset near 6 deg, while a
  downhill recoil component grows with inclination.

Once closed, the grip must also hold axially: the effective lean (perch
inclination plus the lean picked up on approach and impact) has to stay below
the static axial limit.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import _backend
from .core import G, CalibrationSet, MassProperties, PerchSpec, catalog_perch
from .mechanism import CloseBy, GripState, MechanismSpec, SetServoPower, ratchet_step, seated_closure
from .statics import StaticsModel

SAMPLE_RATE = 250.0
DT = 5e-5
HORIZON = 1.0
SUCCESS_RESIDUAL = 0.01
FAILED_FRACTION = 0.2


class SimulationError(RuntimeError):
    pass


class Outcome(str, enum.Enum):
    SUCCESS = "Success"
    NO_TRIGGER = "NoTrigger"
    BOUNCE_OUT = "BounceOut"
    AXIAL_SLIP = "AxialSlip"
    TOPPLE_HANG = "ToppleHang"


@dataclass(frozen=True)
class ApproachScenario:
    perch: PerchSpec
    impact_velocity: float | None = None
    height: float | None = None
    lateral_offset: float = 0.0
    seed: int = 0
    disturbance: float = 0.0

    def __post_init__(self):
        if (self.impact_velocity is None) == (self.height is None):
            raise ValueError("give exactly one of impact_velocity / height")
        v = self.nominal_velocity
        if not (0.0 <= v <= 3.0):
            raise ValueError(f"impact velocity must lie in [0, 3] m/s, got {v!r}")
        if self.disturbance < 0:
            raise ValueError("disturbance must be non-negative")

    @property
    def nominal_velocity(self) -> float:
        if self.impact_velocity is not None:
            return float(self.impact_velocity)
        return math.sqrt(2 * G * max(self.height, 0.0))


@dataclass(frozen=True)
class Disturbance:
    attitude_rate: float = 0.0  # rad/s
    axial_offset: float = 0.0  # m
    axial_lean: float = 0.0  # deg

    @classmethod
    def draw(cls, rng: np.random.Generator, magnitude: float, cal: CalibrationSet) -> Disturbance:
        z = [float(x) for x in rng.standard_normal(3)]
        return cls(
            attitude_rate=magnitude * cal["disturbance.attitude_rate"] * z[0],
            axial_offset=magnitude * cal["disturbance.lateral_offset"] * z[1],
            axial_lean=magnitude * cal["disturbance.axial_lean"] * z[2],
        )


@dataclass
class PerchOutcome:
    classification: Outcome
    impact_velocity: float
    bounce_height: float
    time_to_stable: float
    trace: Any = None  # telemetry.TelemetryTrace when recorded
    details: dict[str, float] = field(default_factory=dict)
    final_state: GripState | None = None

    @property
    def success(self) -> bool:
        return self.classification is Outcome.SUCCESS

    def to_dict(self) -> dict[str, Any]:
        return {
            "classification": self.classification.value,
            "impact_velocity": self.impact_velocity,
            "bounce_height": self.bounce_height,
            "time_to_stable": self.time_to_stable,
            "details": dict(self.details),
            "final_state": None if self.final_state is None else {
                "closure_angle": self.final_state.closure_angle,
                "locked_tooth_index": self.final_state.locked_tooth_index,
                "pawl": self.final_state.pawl.value,
                "servo_power": self.final_state.servo_power.value,
                "grippers": self.final_state.grippers.value,
            },
        }


class ImpactModel:
    """Calibrated impact model for one integrated system."""

    def __init__(self, mass: MassProperties, mech: MechanismSpec, cal: CalibrationSet):
        self.mass = mass
        self.mech = mech
        self.cal = cal
        self.statics = StaticsModel(mass, mech, cal)

    @classmethod
    def default(cls) -> ImpactModel:
        from .core import default_system

        mass, _, mech, cal = default_system()
        return cls(mass, mech, cal)

    # -- parameters -------------------------------------------------------

    @property
    def fork_stiffness(self) -> float:
        k = self.mech.trigger.fork_stiffness
        return self.cal["fork_stiffness"] if k is None else k

    @property
    def fork_damping(self) -> float:
        c = self.mech.trigger.fork_damping
        return self.cal["fork_damping"] if c is None else c

    def lean_arm(self, inclination: float, axial_offset: float = 0.0) -> float:
        h = self.mass.h_cg
        s = math.sin(math.radians(inclination))
        offset = self.cal["cg_axial_offset"] + axial_offset
        return abs(offset - h * s) + self.cal["incline_coupling"] * h * s

    def effective_lean(self, inclination: float, velocity: float, dist: Disturbance) -> float:
        return inclination + self.cal["approach_lean"] + self.cal["recoil_lean"] * velocity + dist.axial_lean

    def dynamic_limit(self) -> float:
        """Highest inclination a slow (v -> 0) undisturbed approach still holds (deg)."""
        return self.statics.static_max_inclination(catalog_perch("wood-40")) - self.cal["approach_lean"]

    def params(self, scenario: ApproachScenario, dist: Disturbance, *, stop_early: bool,
               every: int = 0, dt: float = DT, horizon: float = HORIZON) -> np.ndarray:
        m = self.mass.m_total
        # the throttle-off fall has a closed form; integration starts at contact
        y0, vy0 = 0.0, -scenario.nominal_velocity
        # a zero-speed approach is a hand placement: the weight is carried
        # until the fingers hold, so the fork only sees the dynamic load
        g = 0.0 if scenario.nominal_velocity == 0.0 else G
        arm = self.lean_arm(scenario.perch.inclination, scenario.lateral_offset + dist.axial_offset)
        return np.array([
            m, g, self.fork_stiffness, self.fork_damping, self.mech.trigger.fork_travel_limit,
            self.cal["fork_stop_stiffness"], self.mech.trigger.activation_force, self.cal["gripper_close_time"],
            self.cal["capture_window"], self.mech.gripper_length, arm, m * self.mass.h_cg ** 2,
            y0, vy0, 0.0, dist.attitude_rate, dt, horizon,
            self.cal["grip_stiffness"], self.cal["grip_damping"], 1.0 if stop_early else 0.0, float(every),
        ])

    # -- attempts ---------------------------------------------------------

    def classify(self, scenario: ApproachScenario, dist: Disturbance, result: tuple) -> tuple[Outcome, float]:
        status = result[0]
        v = result[3] if result[2] >= 0 else scenario.nominal_velocity
        theta_eff = self.effective_lean(scenario.perch.inclination, v, dist)
        if status == 0:
            return Outcome.NO_TRIGGER, theta_eff
        if status == 2:
            return Outcome.BOUNCE_OUT, theta_eff
        if status == 3:
            return Outcome.TOPPLE_HANG, theta_eff
        if theta_eff >= self.statics.static_max_inclination(scenario.perch):
            return Outcome.AXIAL_SLIP, theta_eff
        return Outcome.SUCCESS, theta_eff

    def simulate(self, scenario: ApproachScenario, *, record: bool = True, dt: float = DT,
                 horizon: float = HORIZON) -> PerchOutcome:
        rng = np.random.default_rng(scenario.seed)
        dist = Disturbance.draw(rng, scenario.disturbance, self.cal)
        every = int(round(1.0 / (SAMPLE_RATE * dt))) if record else 0
        if record and abs(every * dt * SAMPLE_RATE - 1.0) > 1e-9:
            raise SimulationError("integration step must divide the 250 Hz sample period")
        p = self.params(scenario, dist, stop_early=not record, every=every, dt=dt, horizon=horizon)
        rows = int(horizon * SAMPLE_RATE) + 2 if record else 0
        rec = np.zeros((rows, 5))
        result = _backend.integrate(p, rec)
        if not all(math.isfinite(x) for x in result[2:]):
            raise SimulationError(f"non-finite state in attempt simulation: {result!r}")
        outcome, theta_eff = self.classify(scenario, dist, result)
        (status, n_rec, t_contact, v_contact, t_trig, t_closed, peak, max_rise, max_up,
         t_stable, vy_end, y_end) = result
        if outcome is Outcome.SUCCESS and record and abs(vy_end) >= SUCCESS_RESIDUAL:
            outcome = Outcome.BOUNCE_OUT
        v_imp = v_contact if t_contact >= 0 else scenario.nominal_velocity
        details = {
            "t_contact": t_contact,
            "t_trigger": t_trig,
            "t_closed": t_closed,
            "peak_fork_force": peak,
            "max_rebound_speed": max_up,
            "effective_lean_deg": theta_eff,
            "lean_arm": float(p[10]),
            "residual_velocity": abs(vy_end),
            "final_height": y_end,
        }
        trace = None
        if record:
            from .telemetry import trace_from_simulation

            trace = trace_from_simulation(rec[:n_rec], scenario, t_contact)
        # ballistic apex of the first rebound, whether or not it is caught
        bounce = max_up * max_up / (2 * G)
        details["max_rise"] = max_rise
        return PerchOutcome(outcome, v_imp, bounce, t_stable if outcome is Outcome.SUCCESS else -1.0, trace,
                            details, self.final_grip_state(scenario.perch, triggered=t_trig >= 0,
                                                      captured=status == 1))

    def final_grip_state(self, perch: PerchSpec, *, triggered: bool, captured: bool) -> GripState:
        state = GripState()
        if triggered:
            # fingers that miss the perch run on to full closure
            closure = (seated_closure(self.mech, perch, self.cal["statics.hold_squeeze"]) if captured
                       else self.mech.max_closure)
            state = ratchet_step(state, CloseBy(closure), self.mech.ratchet)
        # the servo is cut once the ratchet holds
        return ratchet_step(state, SetServoPower(False), self.mech.ratchet)

    def min_trigger_velocity(self) -> float:
        """Smallest impact speed whose fork force peak reaches the switch threshold."""
        return self.mech.trigger.activation_force / peak_force_per_speed(
            self.fork_stiffness, self.fork_damping, self.mass.m_total)


def peak_force_per_speed(k: float, c: float, m: float) -> float:
    """Peak of ``k x + c x'`` for a unit-speed impact on a linear spring-damper.

    Gravity is left out: the impact transient is short against the fall.
    """
    wn = math.sqrt(k / m)
    zeta = c / (2 * math.sqrt(k * m))
    if zeta == 0:
        return math.sqrt(k * m)
    if zeta >= 1:
        raise ValueError("overdamped fork is not supported")
    wd = wn * math.sqrt(1 - zeta * zeta)

    def neg_force(t: float) -> float:
        e = math.exp(-zeta * wn * t)
        x = e * math.sin(wd * t) / wd
        v = e * (math.cos(wd * t) - zeta * wn / wd * math.sin(wd * t))
        return -(k * x + c * v)

    res = minimize_scalar(neg_force, bounds=(0.0, math.pi / wd), method="bounded", options={"xatol": 1e-12})
    return max(-res.fun, c)


_DEFAULT: ImpactModel | None = None


def _default_model() -> ImpactModel:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = ImpactModel.default()
    return _DEFAULT


def simulate_attempt(scenario: ApproachScenario, mass: MassProperties | None = None,
                     mechanism: MechanismSpec | None = None, calibration: CalibrationSet | None = None,
                     *, record: bool = True) -> PerchOutcome:
    if mass is None and mechanism is None and calibration is None:
        model = _default_model()
    else:
        from .core import default_system

        d_mass, _, d_mech, d_cal = default_system()
        model = ImpactModel(mass or d_mass, mechanism or d_mech, calibration or d_cal)
    return model.simulate(scenario, record=record)


def min_trigger_velocity(mass: MassProperties | None = None, mechanism: MechanismSpec | None = None,
                         calibration: CalibrationSet | None = None) -> float:
    from .core import default_system

    d_mass, _, d_mech, d_cal = default_system()
    return ImpactModel(mass or d_mass, mechanism or d_mech, calibration or d_cal).min_trigger_velocity()


# ---------------------------------------------------------------------------
# envelope sweep


def classify_fraction(fraction: float) -> str:
    if fraction >= 1.0:
        return "Success"
    if fraction <= FAILED_FRACTION:
        return "Failed"
    return "Mixed"


@dataclass
class EnvelopeGrid:
    velocities: list[float]
    inclinations: list[float]
    fractions: np.ndarray  # (n_velocity, n_inclination)
    metadata: dict[str, Any]
    outcome_counts: dict[str, np.ndarray] = field(default_factory=dict)

    def classification(self, i: int, j: int) -> str:
        return classify_fraction(float(self.fractions[i, j]))

    @property
    def classes(self) -> list[list[str]]:
        return [[self.classification(i, j) for j in range(len(self.inclinations))] for i in range(len(self.velocities))]

    def cell(self, velocity: float, inclination: float) -> tuple[float, str]:
        i = int(np.argmin(np.abs(np.asarray(self.velocities) - velocity)))
        j = int(np.argmin(np.abs(np.asarray(self.inclinations) - inclination)))
        return float(self.fractions[i, j]), self.classification(i, j)

    def all_success_boundary(self, inclination: float) -> float | None:
        """Highest velocity below which every cell at ``inclination`` is all-success."""
        j = int(np.argmin(np.abs(np.asarray(self.inclinations) - inclination)))
        best = None
        for i, v in enumerate(self.velocities):
            if self.fractions[i, j] < 1.0:
                break
            best = v
        return best

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["velocity_mps", "inclination_deg", "success_fraction", "class"])
        for i, v in enumerate(self.velocities):
            for j, th in enumerate(self.inclinations):
                w.writerow([f"{v:.4f}", f"{th:.4f}", f"{self.fractions[i, j]:.6f}", self.classification(i, j)])
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        return {
            "velocities": list(self.velocities),
            "inclinations": list(self.inclinations),
            "cells": [
                {
                    "velocity": v,
                    "inclination": th,
                    "success_fraction": float(self.fractions[i, j]),
                    "class": self.classification(i, j),
                    "outcomes": {k: int(c[i, j]) for k, c in sorted(self.outcome_counts.items())},
                }
                for i, v in enumerate(self.velocities)
                for j, th in enumerate(self.inclinations)
            ],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _cell_seed(master: int, i: int, j: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(i, j))


def _run_cell(model: ImpactModel, perch: PerchSpec, v: float, theta: float, trials: int,
              seed_seq: np.random.SeedSequence, disturbance: float) -> dict[str, int]:
    rng = np.random.default_rng(seed_seq)
    counts = {o.value: 0 for o in Outcome}
    rec = np.zeros((0, 5))
    scen = ApproachScenario(perch.at_inclination(theta), impact_velocity=v, disturbance=disturbance)
    for _ in range(trials):
        dist = Disturbance.draw(rng, disturbance, model.cal)
        p = model.params(scen, dist, stop_early=True)
        result = _backend.integrate(p, rec)
        outcome, _ = model.classify(scen, dist, result)
        counts[outcome.value] += 1
    return counts


def _run_cells(args):
    mass, mech, cal, perch, jobs, trials, master, disturbance = args
    model = ImpactModel(mass, mech, cal)
    return [((i, j), _run_cell(model, perch, v, th, trials, _cell_seed(master, i, j), disturbance))
            for i, j, v, th in jobs]


def sweep_envelope(velocities: Sequence[float], inclinations: Sequence[float], trials: int = 50, seed: int = 0,
                   *, model: ImpactModel | None = None, perch: PerchSpec | None = None,
                   disturbance: float = 1.0, workers: int = 1, progress=None) -> EnvelopeGrid:
    """Success fraction over a (velocity x inclination) grid of randomized attempts.

    Cell seeds derive from ``(seed, i, j)`` only, so the result does not depend
    on ``workers`` or completion order.
    """
    velocities = [float(v) for v in velocities]
    inclinations = [float(t) for t in inclinations]
    if not velocities or not inclinations:
        raise ValueError("velocity and inclination grids must be non-empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    model = model or _default_model()
    perch = perch or catalog_perch("wood-40")
    jobs = [(i, j, v, th) for i, v in enumerate(velocities) for j, th in enumerate(inclinations)]
    results: dict[tuple[int, int], dict[str, int]] = {}
    if workers > 1:
        chunks = [jobs[k::workers] for k in range(workers)]
        payload = [(model.mass, model.mech, model.cal, perch, c, trials, seed, disturbance) for c in chunks if c]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for part in ex.map(_run_cells, payload):
                results.update(part)
                if progress:
                    progress(len(results), len(jobs))
    else:
        for i, j, v, th in jobs:
            results[(i, j)] = _run_cell(model, perch, v, th, trials, _cell_seed(seed, i, j), disturbance)
            if progress:
                progress(len(results), len(jobs))
    shape = (len(velocities), len(inclinations))
    counts = {o.value: np.zeros(shape, dtype=int) for o in Outcome}
    for (i, j), c in results.items():
        for k, n in c.items():
            counts[k][i, j] = n
    fractions = counts[Outcome.SUCCESS.value] / float(trials)
    metadata = {
        "seed": seed,
        "trials": trials,
        "disturbance": disturbance,
        "calibration_id": model.cal.name,
        "perch": perch.label,
        "static_limit_deg": model.statics.static_max_inclination(perch),
        "dynamic_limit_deg": model.dynamic_limit(),
        "backend": _backend.BACKEND,
    }
    return EnvelopeGrid(velocities, inclinations, fractions, metadata, counts)


def default_velocity_grid() -> list[float]:
    return [round(0.2 + 0.1 * i, 10) for i in range(15)]


def default_inclination_grid() -> list[float]:
    return [2.0 * j for j in range(7)]


def cpu_count() -> int:
    return os.cpu_count() or 1
