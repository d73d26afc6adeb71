"""Shared domain types, unit handling and the calibrated parameter set.

Everything internal is SI (m, kg, s, N, N*m).  Angles are carried in degrees
on the public surface because every quantity the user touches (closure,
inclination, take-off cone) is naturally quoted that way; conversion to
radians happens at the point of use.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Mapping

G = 9.80665

# ---------------------------------------------------------------------------
# units

_UNIT_SCALE = {
    # length
    "m": ("length", 1.0),
    "cm": ("length", 1e-2),
    "mm": ("length", 1e-3),
    # mass
    "kg": ("mass", 1.0),
    "g": ("mass", 1e-3),
    # time
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    # force, torque
    "N": ("force", 1.0),
    "N*m": ("torque", 1.0),
    "Nm": ("torque", 1.0),
    "N*cm": ("torque", 1e-2),
    "Ncm": ("torque", 1e-2),
    # velocity
    "m/s": ("velocity", 1.0),
    "mm/s": ("velocity", 1e-3),
    # angle, kept in degrees
    "deg": ("angle", 1.0),
    "rad": ("angle", 180.0 / math.pi),
    # misc
    "Hz": ("frequency", 1.0),
    "N/m": ("stiffness", 1.0),
    "N*s/m": ("damping", 1.0),
    "1": ("ratio", 1.0),
    "%": ("ratio", 1e-2),
}

_QUANTITY_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z%/*]*)\s*$")


class ConfigError(ValueError):
    """Raised when a scenario description fails validation.

    ``errors`` holds one ``(field_path, message)`` pair per violation.
    """

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.errors))


def parse_quantity(value: Any, kind: str) -> float:
    """Convert ``value`` to SI (degrees for angles).

    Bare numbers are taken as already SI.  Strings may carry a unit suffix,
    e.g. ``"40 mm"``, ``"38.8 g"``, ``"55 Ncm"``, ``"12.5 deg"``.
    """
    if isinstance(value, bool):
        raise ValueError(f"expected a {kind}, got a boolean")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _QUANTITY_RE.match(value)
        if m is None:
            raise ValueError(f"cannot parse {value!r} as a {kind}")
        number, unit = float(m.group(1)), m.group(2)
        if not unit:
            out = number
        else:
            if unit not in _UNIT_SCALE:
                raise ValueError(f"unknown unit {unit!r}")
            unit_kind, scale = _UNIT_SCALE[unit]
            if unit_kind != kind:
                raise ValueError(f"unit {unit!r} is a {unit_kind}, expected a {kind}")
            out = number * scale
    else:
        raise ValueError(f"expected a {kind}, got {type(value).__name__}")
    if not math.isfinite(out):
        raise ValueError("value is not finite")
    return out


# ---------------------------------------------------------------------------
# mass properties


@dataclass(frozen=True)
class MassProperties:
    m_vehicle: float = 0.089
    m_battery: float = 0.018
    m_gripper: float = 0.0388
    m_board: float = 0.026
    h_cg: float = 0.28

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be positive, got {v!r}")

    @property
    def m_total(self) -> float:
        return self.m_vehicle + self.m_battery + self.m_gripper + self.m_board

    @property
    def weight(self) -> float:
        return self.m_total * G


@dataclass(frozen=True)
class MassBudget:
    """Share of the gripping mechanism's own mass per subsystem."""

    fraction_actuation: float = 0.44
    fraction_linkage: float = 0.29
    fraction_grippers: float = 0.27

    def __post_init__(self):
        parts = (self.fraction_actuation, self.fraction_linkage, self.fraction_grippers)
        if any(not (0.0 <= p <= 1.0) for p in parts):
            raise ValueError("mass fractions must lie in [0, 1]")
        if abs(sum(parts) - 1.0) > 0.01:
            raise ValueError(f"mass fractions sum to {sum(parts):.4f}, expected 1.0")

    def component_masses(self, m_gripper: float) -> dict[str, float]:
        return {
            "actuation": self.fraction_actuation * m_gripper,
            "linkage": self.fraction_linkage * m_gripper,
            "grippers": self.fraction_grippers * m_gripper,
        }


# ---------------------------------------------------------------------------
# perches


@dataclass(frozen=True)
class Circle:
    diameter: float

    @property
    def kind(self) -> str:
        return "circle"


@dataclass(frozen=True)
class Square:
    width: float
    orientation: str = "flat"  # "flat" or "diamond"

    def __post_init__(self):
        if self.orientation not in ("flat", "diamond"):
            raise ValueError(f"orientation must be 'flat' or 'diamond', got {self.orientation!r}")

    @property
    def kind(self) -> str:
        return "square"


CrossSection = Circle | Square

DEFAULT_FRICTION = 0.9
MAX_INCLINATION = 20.0


@dataclass(frozen=True)
class PerchSpec:
    cross_section: CrossSection
    inclination: float = 0.0
    friction_coefficient: float = DEFAULT_FRICTION
    label: str = ""
    material: str = "wood"

    def __post_init__(self):
        size = self.size
        if not (0.0 < size <= 0.1):
            raise ValueError(f"perch size must lie in (0, 0.1] m, got {size!r}")
        if not (0.0 <= self.inclination <= MAX_INCLINATION):
            raise ValueError(f"inclination must lie in [0, {MAX_INCLINATION}] deg, got {self.inclination!r}")
        if not (self.friction_coefficient > 0 and math.isfinite(self.friction_coefficient)):
            raise ValueError("friction_coefficient must be positive")

    @property
    def size(self) -> float:
        cs = self.cross_section
        return cs.diameter if isinstance(cs, Circle) else cs.width

    def support(self, nx: float, ny: float) -> float:
        """Support function of the cross-section about its centre.

        Returns ``max(n . p)`` over points ``p`` of the section for the unit
        direction ``(nx, ny)`` (y up).
        """
        cs = self.cross_section
        if isinstance(cs, Circle):
            return 0.5 * cs.diameter
        half = 0.5 * cs.width
        if cs.orientation == "flat":
            return half * (abs(nx) + abs(ny))
        # diamond: square rotated by 45 degrees
        c = math.sqrt(0.5)
        return half * (abs(c * nx + c * ny) + abs(-c * nx + c * ny))

    def at_inclination(self, inclination: float) -> PerchSpec:
        return replace(self, inclination=float(inclination))


_CATALOG = {
    "pvc-50": ("PVC ø50", Circle(0.050), "pvc"),
    "pvc-40": ("PVC ø40", Circle(0.040), "pvc"),
    "wood-40": ("wood ø40", Circle(0.040), "wood"),
    "wood-30": ("wood ø30", Circle(0.030), "wood"),
    "square-flat": ("wood square 30x30 flat", Square(0.030, "flat"), "wood"),
    "square-diamond": ("wood square 30x30 diamond", Square(0.030, "diamond"), "wood"),
}

CATALOG_KEYS = tuple(_CATALOG)

_ALIASES = {}
for _key, (_label, _cs, _mat) in _CATALOG.items():
    _ALIASES[_key] = _key
    _ALIASES[_label.lower()] = _key
    _ALIASES[_label.lower().replace("ø", "")] = _key
_ALIASES.update({
    "wood square 30×30 flat": "square-flat",
    "wood square 30×30 diamond": "square-diamond",
    "diamond": "square-diamond",
    "flat": "square-flat",
})


def catalog_perch(name: str, inclination: float = 0.0, friction_coefficient: float = DEFAULT_FRICTION) -> PerchSpec:
    """Build one of the six test perches by key (``"wood-40"``) or label (``"wood ø40"``)."""
    key = _ALIASES.get(name.strip().lower())
    if key is None:
        raise KeyError(f"unknown catalog perch {name!r}; known: {', '.join(CATALOG_KEYS)}")
    label, cs, material = _CATALOG[key]
    return PerchSpec(cs, inclination, friction_coefficient, label=key, material=material)


def catalog(inclination: float = 0.0) -> list[PerchSpec]:
    return [catalog_perch(k, inclination) for k in CATALOG_KEYS]


def perch_display_name(perch: PerchSpec) -> str:
    if perch.label in _CATALOG:
        return _CATALOG[perch.label][0]
    return perch.label or repr(perch.cross_section)


# ---------------------------------------------------------------------------
# calibration parameters

PROVENANCES = ("paper", "fitted", "default")


@dataclass(frozen=True)
class Parameter:
    value: float
    unit: str
    provenance: str
    note: str = ""

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"bad provenance {self.provenance!r}")


@dataclass(frozen=True)
class CalibrationSet:
    """Named scalar parameters with unit and provenance.

    Immutable; ``with_values`` returns an updated copy.
    """

    name: str
    params: Mapping[str, Parameter] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.params[key].value

    def __reduce__(self):
        # params may be a read-only mapping proxy, which does not pickle
        return (type(self), (self.name, dict(self.params)))

    def __contains__(self, key: str) -> bool:
        return key in self.params

    def get(self, key: str, default: float | None = None) -> float | None:
        p = self.params.get(key)
        return default if p is None else p.value

    def with_values(self, name: str | None = None, **values: float) -> CalibrationSet:
        unknown = set(values) - set(self.params)
        if unknown:
            raise KeyError(f"unknown calibration parameters: {sorted(unknown)}")
        params = dict(self.params)
        for k, v in values.items():
            params[k] = replace(params[k], value=float(v), provenance="default" if params[k].provenance == "default" else "fitted")
        return CalibrationSet(name or self.name, params)

    def with_overrides(self, overrides: Mapping[str, float], name: str | None = None) -> CalibrationSet:
        return self.with_values(name=name, **dict(overrides))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "params": {
                k: {"value": p.value, "unit": p.unit, "provenance": p.provenance, "note": p.note}
                for k, p in sorted(self.params.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> CalibrationSet:
        params = {
            k: Parameter(float(v["value"]), v["unit"], v["provenance"], v.get("note", ""))
            for k, v in data["params"].items()
        }
        return cls(data["name"], params)

    @classmethod
    def from_json(cls, text: str) -> CalibrationSet:
        return cls.from_dict(json.loads(text))


def default_system():
    """Default calibrated integrated system.

    Returns ``(MassProperties, MassBudget, MechanismSpec, CalibrationSet)``.
    Calls are deterministic and results compare equal.
    """
    from .calibration import default_calibration
    from .mechanism import MechanismSpec

    cal = default_calibration()
    mass = MassProperties(h_cg=cal["h_cg"])
    return mass, MassBudget(), MechanismSpec(), cal


# ---------------------------------------------------------------------------
# scenario configuration


@dataclass(frozen=True)
class ApproachConfig:
    impact_velocity: float | None = None
    height: float | None = None
    lateral_offset: float = 0.0
    disturbance: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    mass: MassProperties
    perch: PerchSpec
    approach: ApproachConfig
    release_delay: float = 10.0
    calibration_overrides: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        cs = self.perch.cross_section
        if isinstance(cs, Circle):
            perch_cs = {"shape": "circle", "diameter": cs.diameter}
        else:
            perch_cs = {"shape": "square", "width": cs.width, "orientation": cs.orientation}
        return {
            "mass": {
                "vehicle": self.mass.m_vehicle,
                "battery": self.mass.m_battery,
                "gripper": self.mass.m_gripper,
                "board": self.mass.m_board,
                "h_cg": self.mass.h_cg,
            },
            "perch": {
                **perch_cs,
                "inclination": self.perch.inclination,
                "friction_coefficient": self.perch.friction_coefficient,
                "label": self.perch.label,
                "material": self.perch.material,
            },
            "approach": {
                "impact_velocity": self.approach.impact_velocity,
                "height": self.approach.height,
                "lateral_offset": self.approach.lateral_offset,
                "disturbance": self.approach.disturbance,
                "seed": self.approach.seed,
            },
            "cycle": {"release_delay": self.release_delay},
            "calibration": dict(sorted(self.calibration_overrides.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class ValidationReport:
    errors: list[tuple[str, str]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    unknown_keys: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "errors": [{"field": p, "message": m} for p, m in self.errors],
            "notes": list(self.notes),
            "unknown_keys": list(self.unknown_keys),
        }


_TOP_KEYS = {"mass", "perch", "approach", "cycle", "calibration"}
_MASS_KEYS = {"vehicle": "mass", "battery": "mass", "gripper": "mass", "board": "mass", "h_cg": "length"}
_PERCH_KEYS = {"catalog", "shape", "diameter", "width", "orientation", "inclination",
               "friction_coefficient", "label", "material"}
_APPROACH_KEYS = {"impact_velocity": "velocity", "height": "length", "lateral_offset": "length",
                  "disturbance": "ratio", "seed": None}
_CYCLE_KEYS = {"release_delay": "time"}


def _unknown(section: Mapping[str, Any], allowed: Iterable[str], prefix: str, report: ValidationReport):
    for key in section:
        if key not in allowed:
            report.unknown_keys.append(f"{prefix}{key}")


def validate_config(raw: Any, calibration: CalibrationSet | None = None) -> tuple[ScenarioConfig | None, ValidationReport]:
    """Validate a parsed scenario description.

    Never raises on malformed input: returns ``(None, report)`` with every
    violation listed by field path, or ``(config, report)`` where the report
    carries defaulting notes and unknown keys.
    """
    report = ValidationReport()
    if not isinstance(raw, Mapping):
        report.errors.append(("", f"scenario must be a mapping, got {type(raw).__name__}"))
        return None, report
    _unknown(raw, _TOP_KEYS, "", report)

    def section(name: str) -> Mapping[str, Any]:
        val = raw.get(name, {})
        if val is None:
            return {}
        if isinstance(val, str) and name == "perch":
            return {"catalog": val}
        if not isinstance(val, Mapping):
            report.errors.append((name, f"expected a mapping, got {type(val).__name__}"))
            return {}
        return val

    def quantity(sec: Mapping[str, Any], key: str, kind: str, path: str):
        if key not in sec or sec[key] is None:
            return None
        try:
            return parse_quantity(sec[key], kind)
        except ValueError as exc:
            report.errors.append((path, str(exc)))
            return None

    # mass
    mass_sec = section("mass")
    _unknown(mass_sec, _MASS_KEYS, "mass.", report)
    defaults = MassProperties(h_cg=calibration["h_cg"] if calibration is not None else MassProperties.h_cg)
    mass_kwargs = {}
    for key, kind in _MASS_KEYS.items():
        v = quantity(mass_sec, key, kind, f"mass.{key}")
        if v is None:
            continue
        if not v > 0:
            report.errors.append((f"mass.{key}", f"must be positive, got {v!r}"))
            continue
        mass_kwargs["h_cg" if key == "h_cg" else f"m_{key}"] = v
    mass = replace(defaults, **mass_kwargs) if not report.errors else None

    # perch
    perch_sec = section("perch")
    _unknown(perch_sec, _PERCH_KEYS, "perch.", report)
    perch = None
    inclination = quantity(perch_sec, "inclination", "angle", "perch.inclination")
    if inclination is not None and not (0.0 <= inclination <= MAX_INCLINATION):
        report.errors.append(("perch.inclination", f"must lie in [0, {MAX_INCLINATION}] deg, got {inclination!r}"))
        inclination = None
    friction = quantity(perch_sec, "friction_coefficient", "ratio", "perch.friction_coefficient")
    if friction is None and "friction_coefficient" not in perch_sec:
        friction = calibration["friction_coefficient"] if calibration is not None else DEFAULT_FRICTION
        report.notes.append(f"perch.friction_coefficient defaulted to {friction}")
    elif friction is not None and not friction > 0:
        report.errors.append(("perch.friction_coefficient", "must be positive"))
    if "catalog" in perch_sec:
        try:
            perch = catalog_perch(str(perch_sec["catalog"]))
        except KeyError as exc:
            report.errors.append(("perch.catalog", str(exc.args[0])))
    elif perch_sec:
        shape = perch_sec.get("shape")
        try:
            if shape == "circle":
                d = quantity(perch_sec, "diameter", "length", "perch.diameter")
                if d is None:
                    report.errors.append(("perch.diameter", "required for a circular perch"))
                else:
                    perch = PerchSpec(Circle(d), label=str(perch_sec.get("label", f"circle-{d * 1e3:g}mm")),
                                      material=str(perch_sec.get("material", "wood")))
            elif shape == "square":
                w = quantity(perch_sec, "width", "length", "perch.width")
                if w is None:
                    report.errors.append(("perch.width", "required for a square perch"))
                else:
                    orient = str(perch_sec.get("orientation", "flat"))
                    perch = PerchSpec(Square(w, orient), label=str(perch_sec.get("label", f"square-{w * 1e3:g}mm-{orient}")),
                                      material=str(perch_sec.get("material", "wood")))
            else:
                report.errors.append(("perch.shape", f"expected 'circle' or 'square', got {shape!r}"))
        except ValueError as exc:
            report.errors.append(("perch", str(exc)))
    else:
        perch = catalog_perch("wood-40")
        report.notes.append("perch defaulted to catalog wood-40")
    if perch is not None:
        try:
            perch = replace(perch, inclination=inclination if inclination is not None else perch.inclination,
                            friction_coefficient=friction if friction and friction > 0 else perch.friction_coefficient)
        except ValueError as exc:
            report.errors.append(("perch", str(exc)))
            perch = None

    # approach
    app_sec = section("approach")
    _unknown(app_sec, _APPROACH_KEYS, "approach.", report)
    app_kwargs: dict[str, Any] = {}
    for key, kind in _APPROACH_KEYS.items():
        if kind is None:
            if key in app_sec:
                if isinstance(app_sec[key], bool) or not isinstance(app_sec[key], int):
                    report.errors.append((f"approach.{key}", "must be an integer"))
                else:
                    app_kwargs[key] = app_sec[key]
            continue
        v = quantity(app_sec, key, kind, f"approach.{key}")
        if v is not None:
            app_kwargs[key] = v
    iv, h = app_kwargs.get("impact_velocity"), app_kwargs.get("height")
    if iv is not None and h is not None:
        report.errors.append(("approach", "give exactly one of impact_velocity / height"))
    elif iv is None and h is None:
        if app_sec:
            report.errors.append(("approach", "one of impact_velocity / height is required"))
        else:
            app_kwargs["impact_velocity"] = 0.82
            report.notes.append("approach.impact_velocity defaulted to 0.82 m/s")
    if iv is not None and not (0.0 <= iv <= 3.0):
        report.errors.append(("approach.impact_velocity", f"must lie in [0, 3] m/s, got {iv!r}"))
    if h is not None and not (0.0 <= h <= 3.0 ** 2 / (2 * G)):
        report.errors.append(("approach.height", f"must give an impact velocity in [0, 3] m/s, got {h!r} m"))
    if app_kwargs.get("disturbance", 0.0) < 0:
        report.errors.append(("approach.disturbance", "must be non-negative"))

    # cycle
    cyc_sec = section("cycle")
    _unknown(cyc_sec, _CYCLE_KEYS, "cycle.", report)
    delay = quantity(cyc_sec, "release_delay", "time", "cycle.release_delay")
    if delay is not None and delay < 0:
        report.errors.append(("cycle.release_delay", "must be non-negative"))

    # calibration overrides
    cal_sec = section("calibration")
    overrides: dict[str, float] = {}
    for key, val in cal_sec.items():
        if calibration is not None and key not in calibration:
            report.errors.append((f"calibration.{key}", "unknown calibration parameter"))
            continue
        try:
            overrides[key] = float(val)
        except (TypeError, ValueError):
            report.errors.append((f"calibration.{key}", f"expected a number, got {val!r}"))

    if report.errors:
        return None, report
    config = ScenarioConfig(
        mass=mass,
        perch=perch,
        approach=ApproachConfig(**app_kwargs),
        release_delay=delay if delay is not None else 10.0,
        calibration_overrides=overrides,
    )
    return config, report


def load_scenario_text(text: str, suffix: str = ".yaml") -> Any:
    """Parse scenario text; JSON for ``.json``, YAML otherwise."""
    if suffix == ".json":
        return json.loads(text)
    import yaml

    return yaml.safe_load(text)
